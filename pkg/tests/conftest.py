"""Shared fixtures: synthetic datasets, random trees, and the brute-force
pruning oracle used to cross-check the fast implementation."""

import numpy as np
import pytest

from gcnrex import data, model

# ---------------------------------------------------------------------------
# random trees


def random_tree(rng, n):
    """Random head list: attach each node to an earlier one, then relabel
    with a random permutation so structure is not topologically ordered."""
    heads = [0] * n
    for i in range(1, n):
        heads[i] = int(rng.integers(0, i)) + 1
    perm = rng.permutation(n)
    out = [0] * n
    for i in range(n):
        out[perm[i]] = 0 if heads[i] == 0 else int(perm[heads[i] - 1]) + 1
    return out


def random_disjoint_spans(rng, n):
    """Two non-overlapping (start, end) spans inside [0, n-1]; needs n >= 2."""
    while True:
        points = sorted(rng.integers(0, n, size=4).tolist())
        s = (points[0], points[1])
        o = (points[2], points[3])
        if s[1] < o[0]:
            return (s, o) if rng.integers(0, 2) else (o, s)


# ---------------------------------------------------------------------------
# brute-force pruning oracle


def oracle_prune(heads, subj_span, obj_span, k):
    """Naive reference: ancestor-set-intersection LCA plus whole-tree BFS
    restricted to the LCA subtree."""
    n = len(heads)

    def parent(v):
        return None if heads[v] == 0 else heads[v] - 1

    chains = []
    for v in range(n):
        chain = [v]
        while parent(chain[-1]) is not None:
            chain.append(parent(chain[-1]))
        chains.append(chain)
    depth = {v: len(chains[v]) - 1 for v in range(n)}

    tokens = (list(range(subj_span[0], subj_span[1] + 1))
              + list(range(obj_span[0], obj_span[1] + 1)))
    common = set(chains[tokens[0]])
    for t in tokens[1:]:
        common &= set(chains[t])
    lca = max(common, key=lambda v: depth[v])

    path = set()
    for t in tokens:
        for v in chains[t]:
            path.add(v)
            if v == lca:
                break

    subtree = {v for v in range(n) if lca in chains[v]}
    adj = {v: set() for v in range(n)}
    for v in range(n):
        p = parent(v)
        if p is not None:
            adj[v].add(p)
            adj[p].add(v)
    dist = {v: 0 for v in path}
    frontier = list(path)
    while frontier:
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w in subtree and w not in dist:
                    dist[w] = dist[u] + 1
                    nxt.append(w)
        frontier = nxt

    if k == "full":
        return lca, frozenset(path), frozenset(range(n))
    if k == "inf":
        return lca, frozenset(path), frozenset(subtree)
    return lca, frozenset(path), frozenset(v for v, d in dist.items() if d <= k)


# ---------------------------------------------------------------------------
# synthetic relation data


def synth_examples(n=64, seed=0):
    """Separable 3-class toy corpus: subject, verb, and object word all
    identify the relation; two random filler tokens add noise."""
    rng = np.random.default_rng(seed)
    classes = {"rel_a": ("Alice", "founded", "Acme"),
               "rel_b": ("Bob", "visited", "Berlin"),
               "no_relation": ("Carol", "ignored", "Cargo")}
    labels = list(classes)
    fillers = ["the", "a", "old", "new", "big"]
    out = []
    for i in range(n):
        lab = labels[i % 3]
        s, v, o = classes[lab]
        tokens = (s, v, o, str(rng.choice(fillers)), str(rng.choice(fillers)))
        out.append(data.Example(
            id=f"s{i}", tokens=tokens,
            pos=("NNP", "VBD", "NNP", "DT", "DT"),
            ner=("PERSON", "O", "ORGANIZATION", "O", "O"),
            heads=(2, 0, 2, 2, 4),
            deprels=("nsubj", "root", "obj", "dep", "dep"),
            subj_span=(0, 0), obj_span=(2, 2),
            subj_type="PERSON", obj_type="ORGANIZATION", relation=lab))
    return out


def tiny_config(variant="cgcn", n_labels=3, **overrides):
    base = dict(variant=variant, d_word=8, d_pos=2, d_ner=2,
                lstm_hidden_total=8, num_gcn_layers=2, gcn_hidden=8,
                ffnn_layers=2, ffnn_hidden=8, dropout=0.0, beta=0.003,
                k=1, n_labels=n_labels)
    base.update(overrides)
    return model.ModelConfig(**base)


def prepare(examples, vocab, cfg):
    return [(data.encode(ex, vocab),
             model.build_graph_input(ex.heads, ex.subj_span, ex.obj_span,
                                     cfg.k, cfg.use_dependency))
            for ex in examples]


def unit_word_embeddings(vocab, d_word, seed=42):
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-1.0, 1.0, size=(len(vocab.word2id), d_word))
    emb[0] = 0.0
    return emb


@pytest.fixture
def toy_vocab():
    return data.Vocab(
        word2id={data.PAD_TOKEN: 0, data.UNK_TOKEN: 1,
                 **{f"w{i}": i + 2 for i in range(20)}},
        pos2id={data.PAD_TOKEN: 0, data.UNK_TOKEN: 1, "N": 2, "V": 3},
        ner2id={data.PAD_TOKEN: 0, data.UNK_TOKEN: 1, "O": 2, "P": 3},
        labels=("no_relation", "rel_a", "rel_b"),
        neg_label="no_relation")


def random_indexed_example(rng, n, n_labels=3, vocab_size=22):
    heads = random_tree(rng, n)
    subj, obj = random_disjoint_spans(rng, n)
    return data.IndexedExample(
        id=str(rng.integers(1 << 30)),
        word_ids=rng.integers(2, vocab_size, size=n),
        pos_ids=rng.integers(2, 4, size=n),
        ner_ids=rng.integers(2, 4, size=n),
        heads=tuple(heads), subj_span=subj, obj_span=obj,
        label_id=int(rng.integers(0, n_labels)))
