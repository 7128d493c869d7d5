"""GCN and C-GCN relation classifiers.

Two forward paths exist on purpose: a tape path used for training and
gradient checking, and a plain-numpy eval path used for prediction
(single example with a pooling trace, or padded batches with a
block-diagonal adjacency). The two are cross-checked in tests.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff, trees
from .autodiff import ParamStore, Tape, softmax
from .data import Vocab

CHECKPOINT_MAGIC = b"GCNREX1\n"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class ModelConfig:
    variant: str = "cgcn"            # "gcn" or "cgcn"
    d_word: int = 300
    d_pos: int = 30
    d_ner: int = 30
    lstm_hidden_total: int = 200     # concat width of both directions
    num_gcn_layers: int = 2
    gcn_hidden: int = 200
    ffnn_layers: int = 2
    ffnn_hidden: int = 200
    dropout: float = 0.5
    beta: float = 0.003
    k: object = 1                    # int >= 0, trees.INF, or trees.FULL
    n_labels: int = 2
    use_entity_pool: bool = True
    use_dependency: bool = True
    trainable_embeddings: bool = True

    def __post_init__(self):
        for name in ("d_word", "d_pos", "d_ner", "lstm_hidden_total",
                     "num_gcn_layers", "gcn_hidden", "ffnn_layers",
                     "ffnn_hidden", "n_labels"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ModelError("dropout must be in [0, 1)")
        if self.beta < 0.0:
            raise ModelError("beta must be non-negative")
        if self.variant not in ("gcn", "cgcn"):
            raise ModelError(f"unknown variant {self.variant!r}")
        if self.lstm_hidden_total % 2 != 0:
            raise ModelError("lstm_hidden_total must be even (two directions)")

    @property
    def d_input(self):
        return self.d_word + self.d_pos + self.d_ner

    @property
    def lstm_hidden(self):
        return self.lstm_hidden_total // 2

    @property
    def gcn_input(self):
        return self.lstm_hidden_total if self.variant == "cgcn" else self.gcn_hidden

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ModelError(f"unknown config fields {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class GraphInput:
    """Compact pruned-graph view of one example."""
    node_order: np.ndarray        # compact index -> sentence index
    a_tilde: np.ndarray
    degrees: np.ndarray
    subj_rows: np.ndarray         # compact indices of subject tokens
    obj_rows: np.ndarray
    prune: trees.PruneResult
    tree: trees.DepTree


@dataclass(frozen=True)
class PoolTrace:
    """Which kept row won each h_sent dimension during max pooling."""
    node_order: np.ndarray
    argmax_rows: np.ndarray       # compact row index per h_sent dimension
    n_tokens: int


def build_graph_input(heads, subj_span, obj_span, k, use_dependency=True):
    tree = trees.build_tree(list(heads))
    prune = trees.path_centric_prune(tree, subj_span, obj_span, k)
    node_order, _, a_tilde, deg = trees.build_adjacency(prune, tree)
    node_order = np.asarray(node_order, dtype=np.int64)
    if not use_dependency:
        a_tilde = np.eye(len(node_order))
        deg = np.ones(len(node_order))
    pos = {v: i for i, v in enumerate(node_order.tolist())}
    subj_rows = np.array(sorted(pos[t] for t in
                                range(subj_span[0], subj_span[1] + 1) if t in pos),
                         dtype=np.int64)
    obj_rows = np.array(sorted(pos[t] for t in
                               range(obj_span[0], obj_span[1] + 1) if t in pos),
                        dtype=np.int64)
    return GraphInput(node_order=node_order, a_tilde=a_tilde, degrees=deg,
                      subj_rows=subj_rows, obj_rows=obj_rows,
                      prune=prune, tree=tree)


# ---------------------------------------------------------------------------
# parameter initialization

def _xavier(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_params(cfg, vocab, rng, word_emb=None):
    """Build a ParamStore with freshly initialized model parameters."""
    store = ParamStore()
    n_words = len(vocab.word2id)
    if word_emb is None:
        word_emb = rng.uniform(-1.0, 1.0, size=(n_words, cfg.d_word)) / np.sqrt(cfg.d_word)
        word_emb[0] = 0.0
    else:
        word_emb = np.asarray(word_emb, dtype=np.float64)
        if word_emb.shape != (n_words, cfg.d_word):
            raise ModelError(
                f"word embedding shape {word_emb.shape} != ({n_words}, {cfg.d_word})")
    store.add("emb_word", word_emb, trainable=cfg.trainable_embeddings)

    for name, size, dim in (("emb_pos", len(vocab.pos2id), cfg.d_pos),
                            ("emb_ner", len(vocab.ner2id), cfg.d_ner)):
        emb = rng.uniform(-1.0, 1.0, size=(size, dim)) / np.sqrt(dim)
        emb[0] = 0.0
        store.add(name, emb)

    if cfg.variant == "cgcn":
        h = cfg.lstm_hidden
        for dirn in ("fw", "bw"):
            store.add(f"lstm_{dirn}_W", _xavier(rng, cfg.d_input, 4 * h))
            store.add(f"lstm_{dirn}_U", _xavier(rng, h, 4 * h))
            store.add(f"lstm_{dirn}_b", np.zeros((1, 4 * h)))
    else:
        store.add("proj_W", _xavier(rng, cfg.d_input, cfg.gcn_hidden))
        store.add("proj_b", np.zeros((1, cfg.gcn_hidden)))

    d_in = cfg.gcn_input
    for layer in range(cfg.num_gcn_layers):
        store.add(f"gcn{layer}_W", _xavier(rng, d_in, cfg.gcn_hidden))
        store.add(f"gcn{layer}_b", np.zeros((1, cfg.gcn_hidden)))
        d_in = cfg.gcn_hidden

    feat = 3 * cfg.gcn_hidden if cfg.use_entity_pool else cfg.gcn_hidden
    for layer in range(cfg.ffnn_layers):
        store.add(f"ffnn{layer}_W", _xavier(rng, feat, cfg.ffnn_hidden))
        store.add(f"ffnn{layer}_b", np.zeros((1, cfg.ffnn_hidden)))
        feat = cfg.ffnn_hidden
    store.add("out_W", _xavier(rng, feat, cfg.n_labels))
    store.add("out_b", np.zeros((1, cfg.n_labels)))
    return store


# ---------------------------------------------------------------------------
# tape (training) path

def gcn_layer(tape, h_in, a_tilde, dinv, w, b):
    """One graph convolution: ReLU(D^-1 A~ (H W) + b) as matrix products."""
    hw = tape.matmul(h_in, w)
    agg = tape.matmul(a_tilde, hw)
    normed = tape.matmul(dinv, agg)
    return tape.relu(tape.add_bias(normed, b))


def encode_gcn(tape, store, cfg, h0, graph, train=False, rng=None):
    """Stack the configured number of GCN layers over h0 (kept rows)."""
    a_tilde = tape.constant(graph.a_tilde)
    dinv = tape.constant(np.diag(1.0 / graph.degrees))
    h = h0
    for layer in range(cfg.num_gcn_layers):
        w = store.use(tape, f"gcn{layer}_W")
        b = store.use(tape, f"gcn{layer}_b")
        h = gcn_layer(tape, h, a_tilde, dinv, w, b)
        if train and layer < cfg.num_gcn_layers - 1:
            h = tape.dropout(h, cfg.dropout, train, rng)
    return h


def _lstm_direction(tape, x_rows, w, u, b, hidden, reverse):
    n = len(x_rows)
    h = tape.constant(np.zeros((1, hidden)))
    c = tape.constant(np.zeros((1, hidden)))
    outs = [None] * n
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        z = tape.add_bias(tape.add(tape.matmul(x_rows[t], w),
                                   tape.matmul(h, u)), b)
        i = tape.sigmoid(tape.slice_cols(z, 0, hidden))
        f = tape.sigmoid(tape.slice_cols(z, hidden, 2 * hidden))
        o = tape.sigmoid(tape.slice_cols(z, 2 * hidden, 3 * hidden))
        g = tape.tanh(tape.slice_cols(z, 3 * hidden, 4 * hidden))
        c = tape.add(tape.hadamard(f, c), tape.hadamard(i, g))
        h = tape.hadamard(o, tape.tanh(c))
        outs[t] = h
    return outs


def contextualize(tape, store, cfg, x, train=False, rng=None):
    """Full-sentence BiLSTM over the embedded tokens; returns n x width."""
    n = x.shape[0]
    x_rows = [tape.gather_rows(x, np.array([t])) for t in range(n)]
    fw = _lstm_direction(tape, x_rows, store.use(tape, "lstm_fw_W"),
                         store.use(tape, "lstm_fw_U"),
                         store.use(tape, "lstm_fw_b"),
                         cfg.lstm_hidden, reverse=False)
    bw = _lstm_direction(tape, x_rows, store.use(tape, "lstm_bw_W"),
                         store.use(tape, "lstm_bw_U"),
                         store.use(tape, "lstm_bw_b"),
                         cfg.lstm_hidden, reverse=True)
    rows = [tape.concat_cols([fw[t], bw[t]]) for t in range(n)]
    out = tape.concat_rows(rows)
    if train:
        out = tape.dropout(out, cfg.dropout, train, rng)
    return out


def _embed(tape, store, word_ids, pos_ids, ner_ids):
    w = tape.gather_rows(store.use(tape, "emb_word"), word_ids)
    p = tape.gather_rows(store.use(tape, "emb_pos"), pos_ids)
    e = tape.gather_rows(store.use(tape, "emb_ner"), ner_ids)
    return tape.concat_cols([w, p, e])


def pool_and_classify(tape, store, cfg, h_last, graph):
    """Max-pool sentence/entity vectors, run the FFNN head, emit logits."""
    m = h_last.shape[0]
    h_sent, arg = tape.masked_colmax(h_last, np.arange(m))
    trace = PoolTrace(node_order=graph.node_order, argmax_rows=arg,
                      n_tokens=graph.tree.n)
    if cfg.use_entity_pool:
        h_s, _ = tape.masked_colmax(h_last, graph.subj_rows)
        h_o, _ = tape.masked_colmax(h_last, graph.obj_rows)
        feat = tape.concat_cols([h_sent, h_s, h_o])
    else:
        feat = h_sent
    for layer in range(cfg.ffnn_layers):
        feat = tape.relu(tape.add_bias(
            tape.matmul(feat, store.use(tape, f"ffnn{layer}_W")),
            store.use(tape, f"ffnn{layer}_b")))
    logits = tape.add_bias(tape.matmul(feat, store.use(tape, "out_W")),
                           store.use(tape, "out_b"))
    return logits, h_sent, trace


def forward_example(tape, store, cfg, ex, graph, train=False, rng=None):
    """Full forward pass for one indexed example on the tape."""
    x = _embed(tape, store, ex.word_ids, ex.pos_ids, ex.ner_ids)
    if cfg.variant == "cgcn":
        h0_full = contextualize(tape, store, cfg, x, train, rng)
    else:
        h0_full = tape.add_bias(tape.matmul(x, store.use(tape, "proj_W")),
                                store.use(tape, "proj_b"))
    h0 = tape.gather_rows(h0_full, graph.node_order)
    h_last = encode_gcn(tape, store, cfg, h0, graph, train, rng)
    return pool_and_classify(tape, store, cfg, h_last, graph)


def loss_fn(tape, logits, label, h_sent, beta):
    """Softmax cross-entropy plus beta * ||h_sent||^2."""
    ce, probs = tape.softmax_cross_entropy(logits, label)
    if beta > 0.0:
        reg = tape.scale(tape.sum_of_squares(h_sent), beta)
        return tape.add(ce, reg), probs
    return ce, probs


def example_loss(tape, store, cfg, ex, graph, train=False, rng=None):
    logits, h_sent, _ = forward_example(tape, store, cfg, ex, graph, train, rng)
    return loss_fn(tape, logits, ex.label_id, h_sent, cfg.beta)


# ---------------------------------------------------------------------------
# eval (numpy) path

def _np_embed(store, word_ids, pos_ids, ner_ids):
    return np.concatenate([store.value("emb_word")[word_ids],
                           store.value("emb_pos")[pos_ids],
                           store.value("emb_ner")[ner_ids]], axis=1)


def _np_lstm_dir(x, w, u, b, hidden, reverse):
    n = x.shape[0]
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    out = np.zeros((n, hidden))
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        z = x[t] @ w + h @ u + b[0]
        i = 1.0 / (1.0 + np.exp(-z[:hidden]))
        f = 1.0 / (1.0 + np.exp(-z[hidden:2 * hidden]))
        o = 1.0 / (1.0 + np.exp(-z[2 * hidden:3 * hidden]))
        g = np.tanh(z[3 * hidden:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def _np_contextualize(store, cfg, x):
    fw = _np_lstm_dir(x, store.value("lstm_fw_W"), store.value("lstm_fw_U"),
                      store.value("lstm_fw_b"), cfg.lstm_hidden, reverse=False)
    bw = _np_lstm_dir(x, store.value("lstm_bw_W"), store.value("lstm_bw_U"),
                      store.value("lstm_bw_b"), cfg.lstm_hidden, reverse=True)
    return np.concatenate([fw, bw], axis=1)


def _np_gcn(store, cfg, h, a_tilde, degrees):
    for layer in range(cfg.num_gcn_layers):
        w = store.value(f"gcn{layer}_W")
        b = store.value(f"gcn{layer}_b")
        h = np.maximum((a_tilde @ (h @ w)) / degrees[:, None] + b[0], 0.0)
    return h


def _np_head(store, cfg, feat):
    for layer in range(cfg.ffnn_layers):
        feat = np.maximum(feat @ store.value(f"ffnn{layer}_W")
                          + store.value(f"ffnn{layer}_b")[0], 0.0)
    return feat @ store.value("out_W") + store.value("out_b")[0]


def eval_example(store, cfg, ex, graph):
    """Eval-mode forward for one example; returns (probs, logits, trace)."""
    x = _np_embed(store, ex.word_ids, ex.pos_ids, ex.ner_ids)
    if cfg.variant == "cgcn":
        h0_full = _np_contextualize(store, cfg, x)
    else:
        h0_full = x @ store.value("proj_W") + store.value("proj_b")[0]
    h = _np_gcn(store, cfg, h0_full[graph.node_order], graph.a_tilde,
                graph.degrees)
    arg = h.argmax(axis=0)
    h_sent = h.max(axis=0)
    trace = PoolTrace(node_order=graph.node_order, argmax_rows=arg,
                      n_tokens=graph.tree.n)
    if cfg.use_entity_pool:
        h_s = h[graph.subj_rows].max(axis=0)
        h_o = h[graph.obj_rows].max(axis=0)
        feat = np.concatenate([h_sent, h_s, h_o])
    else:
        feat = h_sent
    logits = _np_head(store, cfg, feat[None, :])[0]
    return softmax(logits), logits, trace


def _np_lstm_dir_batch(x, lengths, w, u, b, hidden, reverse):
    """Masked batched LSTM over right-padded input (B x T x d).

    Pad timesteps leave the running state untouched, so rows at valid
    positions match the per-example recurrence exactly.
    """
    bsz, tmax, _ = x.shape
    h = np.zeros((bsz, hidden))
    c = np.zeros((bsz, hidden))
    out = np.zeros((bsz, tmax, hidden))
    order = range(tmax - 1, -1, -1) if reverse else range(tmax)
    for t in order:
        z = x[:, t, :] @ w + h @ u + b[0]
        i = 1.0 / (1.0 + np.exp(-z[:, :hidden]))
        f = 1.0 / (1.0 + np.exp(-z[:, hidden:2 * hidden]))
        o = 1.0 / (1.0 + np.exp(-z[:, 2 * hidden:3 * hidden]))
        g = np.tanh(z[:, 3 * hidden:])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        valid = (t < lengths)[:, None]
        c = np.where(valid, c_new, c)
        h = np.where(valid, h_new, h)
        out[:, t, :] = h
    return out


def predict_proba(store, cfg, examples, graphs, batch_size=50):
    """Batched eval-mode probabilities, output-equivalent to per-example.

    Batching pads token sequences for the BiLSTM (mask-gated state
    updates) and stacks pruned graphs into one block-diagonal adjacency,
    so blocks cannot interact.
    """
    if len(examples) != len(graphs):
        raise ModelError("examples and graphs misaligned")
    rows = []
    for start in range(0, len(examples), batch_size):
        exs = examples[start:start + batch_size]
        gs = graphs[start:start + batch_size]
        rows.append(_predict_batch(store, cfg, exs, gs))
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, cfg.n_labels))


def _predict_batch(store, cfg, exs, graphs):
    bsz = len(exs)
    lengths = np.array([len(e.word_ids) for e in exs])
    tmax = lengths.max()

    if cfg.variant == "cgcn":
        ids = {"word": np.zeros((bsz, tmax), dtype=np.int64),
               "pos": np.zeros((bsz, tmax), dtype=np.int64),
               "ner": np.zeros((bsz, tmax), dtype=np.int64)}
        for bi, e in enumerate(exs):
            ids["word"][bi, :lengths[bi]] = e.word_ids
            ids["pos"][bi, :lengths[bi]] = e.pos_ids
            ids["ner"][bi, :lengths[bi]] = e.ner_ids
        x = np.concatenate([store.value("emb_word")[ids["word"]],
                            store.value("emb_pos")[ids["pos"]],
                            store.value("emb_ner")[ids["ner"]]], axis=2)
        fw = _np_lstm_dir_batch(x, lengths, store.value("lstm_fw_W"),
                                store.value("lstm_fw_U"),
                                store.value("lstm_fw_b"),
                                cfg.lstm_hidden, reverse=False)
        bw = _np_lstm_dir_batch(x, lengths, store.value("lstm_bw_W"),
                                store.value("lstm_bw_U"),
                                store.value("lstm_bw_b"),
                                cfg.lstm_hidden, reverse=True)
        h0_full = np.concatenate([fw, bw], axis=2)
        kept_rows = [h0_full[bi, g.node_order] for bi, g in enumerate(graphs)]
    else:
        kept_rows = []
        for e, g in zip(exs, graphs):
            x = _np_embed(store, e.word_ids, e.pos_ids, e.ner_ids)
            h0 = x @ store.value("proj_W") + store.value("proj_b")[0]
            kept_rows.append(h0[g.node_order])

    sizes = [len(g.node_order) for g in graphs]
    total = sum(sizes)
    big_a = np.zeros((total, total))
    big_d = np.zeros(total)
    offsets = np.cumsum([0] + sizes)
    for bi, g in enumerate(graphs):
        o = offsets[bi]
        m = sizes[bi]
        big_a[o:o + m, o:o + m] = g.a_tilde
        big_d[o:o + m] = g.degrees
    h = _np_gcn(store, cfg, np.concatenate(kept_rows, axis=0), big_a, big_d)

    feats = []
    for bi, g in enumerate(graphs):
        block = h[offsets[bi]:offsets[bi + 1]]
        h_sent = block.max(axis=0)
        if cfg.use_entity_pool:
            h_s = block[g.subj_rows].max(axis=0)
            h_o = block[g.obj_rows].max(axis=0)
            feats.append(np.concatenate([h_sent, h_s, h_o]))
        else:
            feats.append(h_sent)
    logits = _np_head(store, cfg, np.stack(feats))
    return softmax(logits)


# ---------------------------------------------------------------------------
# explanation

def token_contributions(trace):
    """Pooling contribution count per sentence token; pruned tokens get 0."""
    counts = np.zeros(trace.n_tokens, dtype=np.int64)
    np.add.at(counts, trace.node_order[trace.argmax_rows], 1)
    return counts


_PUNCT = {",", ".", '"', "'", "``", "''", "“", "”", "‘", "’"}
_PREPS = {"of", "to", "by"}


@dataclass(frozen=True)
class EdgeFilters:
    punctuation: bool = True
    prepositions: bool = True
    intra_entity: bool = True


def _in_span(i, span):
    return span[0] <= i <= span[1]


def _render_token(ex, i):
    if _in_span(i, ex.subj_span):
        return f"S-{ex.subj_type}"
    if _in_span(i, ex.obj_span):
        return f"O-{ex.obj_type}"
    return ex.tokens[i].lower()


def edge_scores(tree, prune, counts, ex, filters=EdgeFilters()):
    """Rank surviving pruned-tree edges by summed endpoint contributions."""
    scored = []
    for child in sorted(prune.kept):
        head = tree.heads[child]
        if head == 0:
            continue
        parent = head - 1
        if parent not in prune.kept:
            continue
        pair = (parent, child)
        if filters.punctuation and any(ex.tokens[i] in _PUNCT for i in pair):
            continue
        if filters.prepositions and any(ex.tokens[i].lower() in _PREPS for i in pair):
            continue
        if filters.intra_entity and (
                all(_in_span(i, ex.subj_span) for i in pair)
                or all(_in_span(i, ex.obj_span) for i in pair)):
            continue
        score = int(counts[parent] + counts[child])
        scored.append(((_render_token(ex, parent), _render_token(ex, child)),
                       score))
    scored.sort(key=lambda e: (-e[1], e[0]))
    return scored


def aggregate_edges(records):
    """Sum edge scores per (relation, edge pattern) across a dataset.

    `records` is an iterable of (relation, scored-edge list); returns a
    dict relation -> ranked list of ((head, dep), total score).
    """
    totals = {}
    for relation, edges in records:
        bucket = totals.setdefault(relation, {})
        for pattern, score in edges:
            bucket[pattern] = bucket.get(pattern, 0) + score
    out = {}
    for relation, bucket in totals.items():
        ranked = sorted(bucket.items(), key=lambda e: (-e[1], e[0]))
        out[relation] = ranked
    return out


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint_bytes(store, cfg, vocab):
    names = store.names()
    directory = [{"name": n, "shape": list(store.value(n).shape),
                  "trainable": store.trainable(n)} for n in names]
    header = json.dumps({"version": CHECKPOINT_VERSION,
                         "config": cfg.to_dict(),
                         "vocab": vocab.to_dict(),
                         "tensors": directory},
                        sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<Q", len(header))
    blob += header
    for n in names:
        arr = np.ascontiguousarray(store.value(n), dtype="<f8")
        blob += arr.tobytes()
    return bytes(blob)


def save_checkpoint(store, cfg, vocab, path):
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(store, cfg, vocab))


def load_checkpoint_bytes(raw):
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic bytes")
    off = len(CHECKPOINT_MAGIC)
    if len(raw) < off + 8:
        raise CheckpointTruncatedError("missing header length")
    (hlen,) = struct.unpack("<Q", raw[off:off + 8])
    off += 8
    if len(raw) < off + hlen:
        raise CheckpointTruncatedError("truncated header")
    try:
        header = json.loads(raw[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"unreadable header: {e}") from e
    off += hlen
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"version {header.get('version')!r}, expected {CHECKPOINT_VERSION}")
    cfg = ModelConfig.from_dict(header["config"])
    vocab = Vocab.from_dict(header["vocab"])
    store = ParamStore()
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        nbytes = count * 8
        if len(raw) < off + nbytes:
            raise CheckpointTruncatedError(
                f"tensor {entry['name']!r} block truncated")
        arr = np.frombuffer(raw[off:off + nbytes], dtype="<f8").reshape(shape)
        store.add(entry["name"], arr.copy(), trainable=entry["trainable"])
        off += nbytes
    _validate_shapes(store, cfg, vocab)
    return store, cfg, vocab


def load_checkpoint(path):
    with open(path, "rb") as f:
        return load_checkpoint_bytes(f.read())


def _validate_shapes(store, cfg, vocab):
    rng = np.random.default_rng(0)
    reference = init_params(cfg, vocab, rng)
    if set(reference.names()) != set(store.names()):
        raise CheckpointShapeError(
            f"tensor set mismatch: {sorted(set(reference.names()) ^ set(store.names()))}")
    for name in reference.names():
        if reference.value(name).shape != store.value(name).shape:
            raise CheckpointShapeError(
                f"tensor {name!r}: shape {store.value(name).shape} "
                f"inconsistent with config {reference.value(name).shape}")
