"""Deterministic SGD training loop, F1 metrics, median-of-5 selection,
and prediction interpolation."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff, model

# Entity-distance bins for the bucketed evaluation breakdown.
DISTANCE_BUCKETS = ((0, 10), (11, 15), (16, 20), (21, 25),
                    (26, 30), (31, 35), (36, None))


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    def __init__(self, epoch, batch, cause):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {cause}")
        self.epoch = epoch
        self.batch = batch


class EvalError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1.0
    decay: float = 0.9
    anneal_from_epoch: int = 5
    batch_size: int = 50
    seed: int = 1
    metric: str = "micro"     # "micro" or "macro"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0.0 < self.decay <= 1.0):
            raise ValueError("decay must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.metric not in ("micro", "macro"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    macro_f1: float = 0.0
    per_class: dict = field(default_factory=dict)   # label -> {tp, fp, fn}
    buckets: dict = field(default_factory=dict)     # "lo-hi" -> Metrics dict


@dataclass
class PredictionSet:
    labels: tuple
    rows: list    # list of (id, np.ndarray of probabilities)

    def argmax_labels(self):
        return {id_: self.labels[int(np.argmax(p))] for id_, p in self.rows}


@dataclass
class TrainResult:
    checkpoint: bytes
    history: list          # one dict per epoch: epoch, lr, train_loss, dev_f1
    best_dev_f1: float
    best_epoch: int


def _f1(p, r):
    return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0


def _micro_counts(pred, gold, neg_label):
    pred_pos = sum(1 for p in pred if p != neg_label)
    gold_pos = sum(1 for g in gold if g != neg_label)
    correct = sum(1 for p, g in zip(pred, gold) if p == g and p != neg_label)
    precision = correct / pred_pos if pred_pos else 0.0
    recall = correct / gold_pos if gold_pos else 0.0
    return precision, recall


def evaluate_micro(pred, gold, neg_label, distances=None):
    """Micro-averaged P/R/F1 over positive labels (negative class excluded).

    With `distances` (per-example token distance between the entity start
    positions) the metrics are also broken down into the standard bins.
    """
    if len(pred) != len(gold):
        raise EvalError("prediction/gold length mismatch")
    precision, recall = _micro_counts(pred, gold, neg_label)
    per_class = {}
    for p, g in zip(pred, gold):
        if p != neg_label:
            entry = per_class.setdefault(p, {"tp": 0, "fp": 0, "fn": 0})
            if p == g:
                entry["tp"] += 1
            else:
                entry["fp"] += 1
        if g != neg_label and p != g:
            per_class.setdefault(g, {"tp": 0, "fp": 0, "fn": 0})["fn"] += 1
    m = Metrics(precision=precision, recall=recall,
                f1=_f1(precision, recall), per_class=per_class)
    if distances is not None:
        if len(distances) != len(pred):
            raise EvalError("distances length mismatch")
        for lo, hi in DISTANCE_BUCKETS:
            idx = [i for i, d in enumerate(distances)
                   if d >= lo and (hi is None or d <= hi)]
            if not idx:
                continue
            bp, br = _micro_counts([pred[i] for i in idx],
                                   [gold[i] for i in idx], neg_label)
            key = f"{lo}+" if hi is None else f"{lo}-{hi}"
            m.buckets[key] = {"precision": bp, "recall": br,
                              "f1": _f1(bp, br), "count": len(idx)}
    return m


def _relation_type(label):
    # SemEval-style directed labels look like "Cause-Effect(e1,e2)".
    return label.split("(")[0]


def evaluate_macro(pred, gold, neg_label):
    """SemEval-style macro F1: per undirected type with direction-sensitive
    correctness, averaged over the types present in the gold+pred label
    space, Other excluded."""
    if len(pred) != len(gold):
        raise EvalError("prediction/gold length mismatch")
    types = sorted({_relation_type(l) for l in list(pred) + list(gold)
                    if l != neg_label})
    if not types:
        return 0.0
    f1s = []
    for t in types:
        tp = sum(1 for p, g in zip(pred, gold)
                 if p == g and _relation_type(g) == t and g != neg_label)
        fp = sum(1 for p, g in zip(pred, gold)
                 if _relation_type(p) == t and p != neg_label and p != g)
        fn = sum(1 for p, g in zip(pred, gold)
                 if _relation_type(g) == t and g != neg_label and p != g)
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        f1s.append(_f1(precision, recall))
    return float(np.mean(f1s))


def _dev_f1(store, cfg, dev, vocab, metric):
    exs = [e for e, _ in dev]
    graphs = [g for _, g in dev]
    probs = model.predict_proba(store, cfg, exs, graphs)
    labels = vocab.labels
    pred = [labels[int(np.argmax(p))] for p in probs]
    gold = [labels[e.label_id] for e in exs]
    if metric == "macro":
        return evaluate_macro(pred, gold, vocab.neg_label)
    return evaluate_micro(pred, gold, vocab.neg_label).f1


def train(cfg, store, train_data, dev_data, tcfg, vocab):
    """Seeded SGD with gradient clipping and dev-F1 annealing.

    `train_data`/`dev_data` are lists of (IndexedExample, GraphInput).
    Returns the best-dev checkpoint (last epoch when no dev set is given)
    plus the per-epoch history.
    """
    if not train_data:
        raise TrainingError("empty training set")
    rng = np.random.default_rng(tcfg.seed)
    lr = tcfg.lr
    best_f1 = -np.inf
    best_epoch = -1
    best_ckpt = None
    history = []

    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(train_data))
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, len(order), tcfg.batch_size)):
            batch = order[start:start + tcfg.batch_size]
            store.zero_grad()
            for idx in batch:
                ex, graph = train_data[idx]
                tape = autodiff.Tape()
                try:
                    loss, _ = model.example_loss(tape, store, cfg, ex, graph,
                                                 train=True, rng=rng)
                    epoch_loss += loss.value[0, 0]
                    scaled = tape.scale(loss, 1.0 / len(batch))
                    autodiff.backward(tape, scaled, store)
                except autodiff.NonFiniteError as e:
                    raise NonFiniteLossError(epoch, bi, e) from e
            autodiff.clip_and_step(store, lr)
        epoch_loss /= len(train_data)

        dev_f1 = None
        if dev_data:
            dev_f1 = _dev_f1(store, cfg, dev_data, vocab, tcfg.metric)
            improved = dev_f1 > best_f1
            if improved:
                best_f1 = dev_f1
                best_epoch = epoch
                best_ckpt = model.checkpoint_bytes(store, cfg, vocab)
            if epoch >= tcfg.anneal_from_epoch and not improved:
                lr *= tcfg.decay
        history.append({"epoch": epoch, "lr": lr, "train_loss": epoch_loss,
                        "dev_f1": dev_f1})

    if best_ckpt is None:
        best_ckpt = model.checkpoint_bytes(store, cfg, vocab)
        best_epoch = tcfg.epochs
        best_f1 = float("nan")
    return TrainResult(checkpoint=best_ckpt, history=history,
                       best_dev_f1=best_f1, best_epoch=best_epoch)


def run_median_protocol(runs, expected_count=5):
    """Select the run with the median dev F1; ties go to the lowest seed.

    `runs` is a list of dicts with at least `seed` and `dev_f1` keys.
    """
    if expected_count % 2 == 0:
        raise ValueError("expected_count must be odd")
    if len(runs) != expected_count:
        raise ValueError(f"got {len(runs)} runs, expected {expected_count}")
    f1s = sorted(r["dev_f1"] for r in runs)
    median = f1s[len(f1s) // 2]
    candidates = [r for r in runs if r["dev_f1"] == median]
    return min(candidates, key=lambda r: r["seed"])


# ---------------------------------------------------------------------------
# interpolation

def interpolate(pg, ps, alpha):
    """Convex combination of two prediction sets: alpha*PG + (1-alpha)*PS."""
    if not (0.0 <= alpha <= 1.0):
        raise EvalError(f"alpha {alpha} outside [0, 1]")
    if tuple(pg.labels) != tuple(ps.labels):
        raise EvalError("label lists differ")
    ps_by_id = dict(ps.rows)
    if set(ps_by_id) != {id_ for id_, _ in pg.rows}:
        raise EvalError("id sets differ")
    rows = [(id_, alpha * p + (1.0 - alpha) * ps_by_id[id_])
            for id_, p in pg.rows]
    return PredictionSet(labels=tuple(pg.labels), rows=rows)


def tune_alpha(pg, ps, golds, neg_label, step=0.05, metric="micro"):
    """Grid search alpha on dev F1; ties resolve to the smallest alpha."""
    n_steps = int(round(1.0 / step))
    grid = [min(i * step, 1.0) for i in range(n_steps + 1)]
    best_alpha, best_f1 = None, -np.inf
    for alpha in grid:
        mixed = interpolate(pg, ps, alpha)
        pred_by_id = mixed.argmax_labels()
        ids = [id_ for id_, _ in mixed.rows]
        pred = [pred_by_id[i] for i in ids]
        gold = [golds[i] for i in ids]
        if metric == "macro":
            f1 = evaluate_macro(pred, gold, neg_label)
        else:
            f1 = evaluate_micro(pred, gold, neg_label).f1
        if f1 > best_f1:
            best_alpha, best_f1 = alpha, f1
    return best_alpha, best_f1


# ---------------------------------------------------------------------------
# file formats

def write_predictions(pset, path):
    """Header line {"labels": [...]}, then one object per example with
    probabilities at 17 significant digits."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"labels": list(pset.labels)}) + "\n")
        for id_, probs in pset.rows:
            probs_txt = ", ".join(format(float(p), ".17g") for p in probs)
            f.write('{"id": %s, "probs": [%s]}\n' % (json.dumps(id_), probs_txt))


def read_predictions(path):
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        labels = tuple(header["labels"])
        rows = []
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            probs = np.array(obj["probs"], dtype=np.float64)
            if len(probs) != len(labels):
                raise EvalError(
                    f"example {obj['id']!r}: {len(probs)} probabilities, "
                    f"{len(labels)} labels")
            rows.append((obj["id"], probs))
    return PredictionSet(labels=labels, rows=rows)


def write_history(history, path):
    with open(path, "w", encoding="utf-8") as f:
        for entry in history:
            f.write(json.dumps(entry) + "\n")
