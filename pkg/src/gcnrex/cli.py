"""Command-line interface: prune, stats, train, eval, predict,
interpolate, explain, gradcheck.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or validation
failure. Diagnostics go to stderr; machine-readable output goes to files
or stdout.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff, data, model, plots, training, trees

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _parse_k(text):
    if text in (trees.INF, trees.FULL):
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"k must be a non-negative integer, 'inf', or 'full' (got {text!r})")
    if k < 0:
        raise argparse.ArgumentTypeError("k must be >= 0")
    return k


def _parse_span(text):
    try:
        a, b = text.split(":")
        return (int(a), int(b))
    except ValueError:
        raise argparse.ArgumentTypeError(f"span must look like start:end (got {text!r})")


def _add_data_args(p, dev=False):
    p.add_argument("--data", required=True, help="dataset path (JSONL)")
    if dev:
        p.add_argument("--dev", help="dev dataset path (JSONL)")
    p.add_argument("--mask", choices=["typed", "unk", "none"], default="typed")


def _add_model_args(p):
    p.add_argument("--model", choices=["gcn", "cgcn"], default="cgcn")
    p.add_argument("--k", type=_parse_k, default=1)
    p.add_argument("--word-dim", type=int, default=300)
    p.add_argument("--pos-dim", type=int, default=30)
    p.add_argument("--ner-dim", type=int, default=30)
    p.add_argument("--lstm-hidden", type=int, default=200,
                   help="total BiLSTM output width (both directions)")
    p.add_argument("--gcn-layers", type=int, default=2)
    p.add_argument("--gcn-hidden", type=int, default=200)
    p.add_argument("--ffnn-layers", type=int, default=2)
    p.add_argument("--ffnn-hidden", type=int, default=200)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.003)
    p.add_argument("--no-entity-pool", action="store_true",
                   help="classify from the sentence vector only")
    p.add_argument("--no-dependency", action="store_true",
                   help="replace the adjacency with the identity")
    p.add_argument("--fixed-embeddings", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gcnrex",
        description="Relation extraction with graph convolutions over "
                    "pruned dependency trees")
    parser.add_argument("--config", help="JSON file whose keys mirror flag "
                        "names; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="path-centric pruning report")
    p.add_argument("--data", help="JSONL dataset path")
    p.add_argument("--conllu", help="CoNLL-U file (spans via --subj/--obj)")
    p.add_argument("--subj", type=_parse_span, help="0-based inclusive span start:end")
    p.add_argument("--obj", type=_parse_span)
    p.add_argument("--k", type=_parse_k, default=1)
    p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("stats", help="dataset statistics")
    _add_data_args(p)
    p.add_argument("--figures", help="directory for rendered figures")
    p.add_argument("--out")

    p = sub.add_parser("train", help="train a model")
    _add_data_args(p, dev=True)
    _add_model_args(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--decay", type=float, default=0.9)
    p.add_argument("--anneal-from", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--metric", choices=["micro", "macro"], default="micro")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--glove", help="GloVe-style embedding text file")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--median", action="store_true",
                   help="with --runs N, keep the median-dev-F1 run")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", help="history JSONL path (default <out>.history.jsonl)")
    p.add_argument("--figures", help="directory for rendered figures")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--buckets", action="store_true",
                   help="add the entity-distance breakdown")
    p.add_argument("--figures", help="directory for rendered figures")

    p = sub.add_parser("predict", help="write a prediction file")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("interpolate", help="combine two prediction files")
    p.add_argument("--a", required=True, help="first prediction file (weight alpha)")
    p.add_argument("--b", required=True, help="second prediction file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tune", action="store_true", help="grid-search alpha on --gold")
    p.add_argument("--gold", help="JSONL dataset with gold labels")
    p.add_argument("--mask", choices=["typed", "unk", "none"], default="typed")
    p.add_argument("--metric", choices=["micro", "macro"], default="micro")
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--out", required=True)

    p = sub.add_parser("explain", help="token contributions and top edges")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--no-filters", action="store_true",
                   help="keep punctuation/preposition/intra-entity edges")
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.add_argument("--tsv", help="per-token contribution TSV path")
    p.add_argument("--figures", help="directory for shading figures")
    p.add_argument("--max-figures", type=int, default=25)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--corrupt", action="store_true",
                   help="test hook: inject a gradient error")
    return parser


def _apply_config(parser, args, argv):
    if not args.config:
        return args
    with open(args.config, encoding="utf-8") as f:
        overrides = json.load(f)
    known = set(vars(args))
    bad = set(overrides) - known
    if bad:
        parser.error(f"unknown config keys: {sorted(bad)}")
    explicit = {tok.lstrip("-").replace("-", "_").split("=")[0]
                for tok in argv if tok.startswith("--")}
    for key, value in overrides.items():
        if key not in explicit:
            setattr(args, key, value)
    return args


def _load_masked(path, mask_mode):
    return [data.mask_entities(ex, mask_mode) for ex in data.load_examples(path)]


def _model_config(args, n_labels):
    return model.ModelConfig(
        variant=args.model, d_word=args.word_dim, d_pos=args.pos_dim,
        d_ner=args.ner_dim, lstm_hidden_total=args.lstm_hidden,
        num_gcn_layers=args.gcn_layers, gcn_hidden=args.gcn_hidden,
        ffnn_layers=args.ffnn_layers, ffnn_hidden=args.ffnn_hidden,
        dropout=args.dropout, beta=args.beta, k=args.k, n_labels=n_labels,
        use_entity_pool=not args.no_entity_pool,
        use_dependency=not args.no_dependency,
        trainable_embeddings=not args.fixed_embeddings)


def _prepare(examples, vocab, cfg):
    prepared = []
    for ex in examples:
        idx = data.encode(ex, vocab)
        graph = model.build_graph_input(ex.heads, ex.subj_span, ex.obj_span,
                                        cfg.k, cfg.use_dependency)
        prepared.append((idx, graph))
    return prepared


def _emit(obj, out_path):
    text = json.dumps(obj, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------

def cmd_prune(args):
    if args.data:
        examples = data.load_examples(args.data)
    elif args.conllu:
        if not (args.subj and args.obj):
            raise UsageError("--conllu requires --subj and --obj spans")
        examples = data.load_examples(args.conllu, fmt="conllu",
                                      subj_span=args.subj, obj_span=args.obj)
    else:
        raise UsageError("prune needs --data or --conllu")

    reports = []
    kept_fracs = []
    for ex in examples:
        tree = trees.build_tree(list(ex.heads))
        pr = trees.path_centric_prune(tree, ex.subj_span, ex.obj_span, args.k)
        kept = sorted(pr.kept)
        reports.append({
            "id": ex.id,
            "lca": pr.lca + 1,
            "path": [v + 1 for v in sorted(pr.path_nodes)],
            "kept": [v + 1 for v in kept],
            "dist": [pr.dist[v] for v in kept],
        })
        kept_fracs.append(len(kept) / ex.n)
    _emit({"k": args.k,
           "examples": reports,
           "summary": {"num_examples": len(reports),
                       "mean_kept_fraction": float(np.mean(kept_fracs))}},
          args.out)
    return EXIT_OK


def cmd_stats(args):
    examples = _load_masked(args.data, args.mask)
    label_counts = {}
    lengths = []
    for ex in examples:
        label_counts[ex.relation] = label_counts.get(ex.relation, 0) + 1
        lengths.append(ex.n)
    kept = {}
    for k in (0, 1, 2, trees.INF, trees.FULL):
        fracs = []
        for ex in examples:
            tree = trees.build_tree(list(ex.heads))
            pr = trees.path_centric_prune(tree, ex.subj_span, ex.obj_span, k)
            fracs.append(len(pr.kept) / ex.n)
        kept[str(k)] = float(np.mean(fracs))
    report = {"num_examples": len(examples),
              "labels": label_counts,
              "mean_length": float(np.mean(lengths)),
              "mean_kept_fraction_by_k": kept}
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        plots.plot_label_histogram(label_counts,
                                   os.path.join(args.figures, "labels.png"))
    _emit(report, args.out)
    return EXIT_OK


def _train_once(args, cfg, vocab, train_prepared, dev_prepared, word_emb, seed):
    rng = np.random.default_rng(seed)
    store = model.init_params(cfg, vocab, rng, word_emb=word_emb)
    tcfg = training.TrainConfig(epochs=args.epochs, lr=args.lr,
                                decay=args.decay,
                                anneal_from_epoch=args.anneal_from,
                                batch_size=args.batch_size, seed=seed,
                                metric=args.metric)
    return training.train(cfg, store, train_prepared, dev_prepared, tcfg, vocab)


def cmd_train(args):
    train_examples = _load_masked(args.data, args.mask)
    dev_examples = _load_masked(args.dev, args.mask) if args.dev else []
    pretrained = None
    if args.glove:
        with open(args.glove, encoding="utf-8") as f:
            pretrained = [line.split(" ", 1)[0] for line in f if line.strip()]
    vocab = data.build_vocab(train_examples, min_freq=args.min_freq,
                             pretrained=pretrained,
                             extra_examples=dev_examples)
    cfg = _model_config(args, n_labels=len(vocab.labels))
    word_emb = None
    if args.glove:
        word_emb = data.load_glove(args.glove, vocab, args.seed,
                                   d_word=cfg.d_word)
    train_prepared = _prepare(train_examples, vocab, cfg)
    dev_prepared = _prepare(dev_examples, vocab, cfg)

    if args.runs > 1:
        runs = []
        results = {}
        for i in range(args.runs):
            seed = args.seed + i
            result = _train_once(args, cfg, vocab, train_prepared,
                                 dev_prepared, word_emb, seed)
            results[seed] = result
            runs.append({"seed": seed, "dev_f1": result.best_dev_f1,
                         "best_epoch": result.best_epoch})
            print(f"run seed={seed} dev_f1={result.best_dev_f1}", file=sys.stderr)
        if args.median:
            selected = training.run_median_protocol(runs, expected_count=args.runs)
        else:
            selected = max(runs, key=lambda r: (r["dev_f1"], -r["seed"]))
        result = results[selected["seed"]]
        print(json.dumps({"runs": runs, "selected_seed": selected["seed"]}))
    else:
        result = _train_once(args, cfg, vocab, train_prepared, dev_prepared,
                             word_emb, args.seed)
        print(json.dumps({"best_epoch": result.best_epoch,
                          "dev_f1": result.best_dev_f1}))

    with open(args.out, "wb") as f:
        f.write(result.checkpoint)
    history_path = args.history or args.out + ".history.jsonl"
    training.write_history(result.history, history_path)
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        plots.plot_history(result.history,
                           os.path.join(args.figures, "history.png"))
    return EXIT_OK


def _load_for_checkpoint(args):
    store, cfg, vocab = model.load_checkpoint(args.checkpoint)
    examples = _load_masked(args.data, args.mask)
    prepared = _prepare(examples, vocab, cfg)
    return store, cfg, vocab, examples, prepared


def cmd_eval(args):
    store, cfg, vocab, examples, prepared = _load_for_checkpoint(args)
    probs = model.predict_proba(store, cfg, [e for e, _ in prepared],
                                [g for _, g in prepared])
    pred = [vocab.labels[int(np.argmax(p))] for p in probs]
    gold = [ex.relation for ex in examples]
    distances = None
    if args.buckets:
        distances = [abs(ex.subj_span[0] - ex.obj_span[0]) for ex in examples]
    metrics = training.evaluate_micro(pred, gold, vocab.neg_label,
                                      distances=distances)
    macro = training.evaluate_macro(pred, gold, vocab.neg_label)
    report = {"precision": metrics.precision, "recall": metrics.recall,
              "f1": metrics.f1, "macro_f1": macro}
    if args.buckets:
        report["buckets"] = metrics.buckets
        if args.figures:
            os.makedirs(args.figures, exist_ok=True)
            plots.plot_buckets(metrics.buckets,
                               os.path.join(args.figures, "buckets.png"))
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_predict(args):
    store, cfg, vocab, examples, prepared = _load_for_checkpoint(args)
    probs = model.predict_proba(store, cfg, [e for e, _ in prepared],
                                [g for _, g in prepared])
    pset = training.PredictionSet(
        labels=tuple(vocab.labels),
        rows=[(ex.id, probs[i]) for i, ex in enumerate(examples)])
    training.write_predictions(pset, args.out)
    return EXIT_OK


def cmd_interpolate(args):
    pg = training.read_predictions(args.a)
    ps = training.read_predictions(args.b)
    report = {}
    if args.tune:
        if not args.gold:
            raise UsageError("--tune requires --gold")
        gold_examples = _load_masked(args.gold, args.mask)
        golds = {ex.id: ex.relation for ex in gold_examples}
        neg = "no_relation" if "no_relation" in pg.labels else pg.labels[0]
        alpha, f1 = training.tune_alpha(pg, ps, golds, neg,
                                        step=args.grid_step,
                                        metric=args.metric)
        report["alpha"] = alpha
        report["dev_f1"] = f1
    else:
        if args.alpha is None:
            raise UsageError("provide --alpha or --tune")
        alpha = args.alpha
        report["alpha"] = alpha
    mixed = training.interpolate(pg, ps, alpha)
    training.write_predictions(mixed, args.out)
    if args.gold and not args.tune:
        gold_examples = _load_masked(args.gold, args.mask)
        golds = {ex.id: ex.relation for ex in gold_examples}
        pred_by_id = mixed.argmax_labels()
        ids = [id_ for id_, _ in mixed.rows]
        neg = "no_relation" if "no_relation" in pg.labels else pg.labels[0]
        m = training.evaluate_micro([pred_by_id[i] for i in ids],
                                    [golds[i] for i in ids], neg)
        report["f1"] = m.f1
    print(json.dumps(report))
    return EXIT_OK


def cmd_explain(args):
    store, cfg, vocab, examples, prepared = _load_for_checkpoint(args)
    filters = model.EdgeFilters() if not args.no_filters else \
        model.EdgeFilters(punctuation=False, prepositions=False,
                          intra_entity=False)
    per_example = []
    edge_records = []
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
    for i, (ex, (idx, graph)) in enumerate(zip(examples, prepared)):
        _, _, trace = model.eval_example(store, cfg, idx, graph)
        counts = model.token_contributions(trace)
        kept = [t in graph.prune.kept for t in range(ex.n)]
        per_example.append({"id": ex.id, "tokens": list(ex.tokens),
                            "counts": counts.tolist(), "kept": kept})
        edges = model.edge_scores(graph.tree, graph.prune, counts, ex,
                                  filters=filters)
        edge_records.append((ex.relation, edges))
        if args.figures and i < args.max_figures:
            plots.plot_token_contributions(
                ex.tokens, counts, kept,
                os.path.join(args.figures, f"contrib_{i:03d}.png"),
                title=f"{ex.id} ({ex.relation})")
    aggregated = model.aggregate_edges(edge_records)
    relations = {rel: [[head, dep, score] for (head, dep), score
                       in ranked[:args.top_k]]
                 for rel, ranked in aggregated.items()}
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8") as f:
            f.write("id\ttoken_index\ttoken\tcontribution\tkept\n")
            for rec in per_example:
                for t, tok in enumerate(rec["tokens"]):
                    f.write(f"{rec['id']}\t{t}\t{tok}\t{rec['counts'][t]}\t"
                            f"{int(rec['kept'][t])}\n")
    _emit({"examples": per_example, "relations": relations}, args.out)
    return EXIT_OK


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    n = 7
    vocab = data.Vocab(
        word2id={data.PAD_TOKEN: 0, data.UNK_TOKEN: 1,
                 **{f"w{i}": i + 2 for i in range(8)}},
        pos2id={data.PAD_TOKEN: 0, data.UNK_TOKEN: 1, "NOUN": 2, "VERB": 3},
        ner2id={data.PAD_TOKEN: 0, data.UNK_TOKEN: 1, "O": 2, "PERSON": 3},
        labels=("no_relation", "rel_a", "rel_b"), neg_label="no_relation")
    cfg = model.ModelConfig(variant="cgcn", d_word=4, d_pos=2, d_ner=2,
                            lstm_hidden_total=4, num_gcn_layers=2,
                            gcn_hidden=5, ffnn_layers=2, ffnn_hidden=6,
                            dropout=0.0, beta=0.003, k=1, n_labels=3)
    store = model.init_params(cfg, vocab, rng)
    heads = [0, 1, 2, 2, 1, 5, 5]
    ex = data.IndexedExample(
        id="gc", word_ids=rng.integers(2, 10, size=n),
        pos_ids=rng.integers(2, 4, size=n), ner_ids=rng.integers(2, 4, size=n),
        heads=tuple(heads), subj_span=(2, 3), obj_span=(5, 6), label_id=1)
    graph = model.build_graph_input(heads, ex.subj_span, ex.obj_span, cfg.k)

    def build_loss():
        tape = autodiff.Tape()
        loss, _ = model.example_loss(tape, store, cfg, ex, graph, train=False)
        return tape, loss

    corrupt_name = "gcn0_W" if args.corrupt else None
    overall, per_param = autodiff.grad_check(build_loss, store,
                                             corrupt_name=corrupt_name)
    for name in sorted(per_param):
        print(f"{name}: {per_param[name]:.3e}", file=sys.stderr)
    print(json.dumps({"max_relative_error": overall,
                      "threshold": 1e-4,
                      "passed": bool(overall < 1e-4)}))
    return EXIT_OK if overall < 1e-4 else EXIT_RUNTIME


class UsageError(ValueError):
    pass


_COMMANDS = {
    "prune": cmd_prune,
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "interpolate": cmd_interpolate,
    "explain": cmd_explain,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(parser, args, argv)
        return _COMMANDS[args.command](args)
    except (UsageError, data.ValidationError, trees.TreeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (data.DataError, model.ModelError, model.CheckpointError,
            training.TrainingError, training.EvalError,
            autodiff.AutodiffError, autodiff.NonFiniteError,
            OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
