"""Dependency tree validation, LCA/path computation, and path-centric pruning.

All node indices are 0-based internally. Head arrays follow the CoNLL-U
convention: 1-based, with 0 marking the root token.
"""

from dataclasses import dataclass

import numpy as np

# Pruning distance sentinels. Numeric K keeps nodes of the LCA subtree
# within K tree edges of the dependency path; INF keeps the whole LCA
# subtree; FULL keeps every token in the sentence.
INF = "inf"
FULL = "full"


class TreeError(ValueError):
    """Base class for malformed dependency trees."""


class CycleError(TreeError):
    pass


class NoRootError(CycleError):
    # every head non-zero forces a cycle in the head function
    pass


class MultipleRootsError(TreeError):
    pass


class HeadOutOfRangeError(TreeError):
    pass


class EmptyKeptError(TreeError):
    pass


@dataclass(frozen=True)
class DepTree:
    n: int
    heads: tuple          # 1-based heads, 0 = root
    root: int             # 0-based root index
    children: tuple       # tuple of tuples, 0-based
    depth: tuple          # distance from root per node


@dataclass(frozen=True)
class PruneResult:
    k: object             # int >= 0, INF, or FULL
    lca: int
    path_nodes: frozenset
    kept: frozenset
    dist: dict            # kept node -> distance to nearest path node


def build_tree(heads):
    """Validate a 1-based head list and derive the tree structure."""
    n = len(heads)
    if n == 0:
        raise TreeError("empty head list")
    roots = [i for i, h in enumerate(heads) if h == 0]
    if not roots:
        raise NoRootError("no root (no head equals 0)")
    if len(roots) > 1:
        raise MultipleRootsError(
            f"multiple roots at positions {[r + 1 for r in roots]}")
    for i, h in enumerate(heads):
        if not (0 <= h <= n):
            raise HeadOutOfRangeError(
                f"head {h} of token {i + 1} outside [0, {n}]")
        if h == i + 1:
            raise CycleError(f"token {i + 1} is its own head")
    root = roots[0]
    children = [[] for _ in range(n)]
    for i, h in enumerate(heads):
        if h != 0:
            children[h - 1].append(i)

    # BFS from the root; unreachable nodes imply a cycle among them.
    depth = [-1] * n
    depth[root] = 0
    queue = [root]
    while queue:
        u = queue.pop(0)
        for v in children[u]:
            depth[v] = depth[u] + 1
            queue.append(v)
    if any(d < 0 for d in depth):
        bad = [i + 1 for i, d in enumerate(depth) if d < 0]
        raise CycleError(f"cycle among tokens {bad}")

    return DepTree(n=n, heads=tuple(heads), root=root,
                   children=tuple(tuple(c) for c in children),
                   depth=tuple(depth))


def _parent(tree, v):
    h = tree.heads[v]
    return None if h == 0 else h - 1


def _span_tokens(span):
    s, e = span
    return list(range(s, e + 1))


def _lca_pair(tree, a, b):
    while tree.depth[a] > tree.depth[b]:
        a = _parent(tree, a)
    while tree.depth[b] > tree.depth[a]:
        b = _parent(tree, b)
    while a != b:
        a = _parent(tree, a)
        b = _parent(tree, b)
    return a


def lca_and_path(tree, subj_span, obj_span):
    """LCA of all entity tokens plus the union of their ancestor chains.

    Every token of a multi-token entity anchors the path: the returned set
    is the union, over entity tokens, of the chain from the token up to
    the LCA (inclusive on both ends).
    """
    tokens = _span_tokens(subj_span) + _span_tokens(obj_span)
    for t in tokens:
        if not (0 <= t < tree.n):
            raise TreeError(f"span token {t} outside sentence of length {tree.n}")
    lca = tokens[0]
    for t in tokens[1:]:
        lca = _lca_pair(tree, lca, t)
    path = {lca}
    for t in tokens:
        v = t
        while v != lca:
            path.add(v)
            v = _parent(tree, v)
    return lca, frozenset(path)


def _subtree_nodes(tree, root):
    out = {root}
    stack = [root]
    while stack:
        u = stack.pop()
        for v in tree.children[u]:
            out.add(v)
            stack.append(v)
    return out


def _bfs_dist_from(tree, sources, allowed):
    """Edge distances from the source set, walking only nodes in `allowed`."""
    dist = {s: 0 for s in sources}
    queue = list(sources)
    while queue:
        u = queue.pop(0)
        neighbors = list(tree.children[u])
        p = _parent(tree, u)
        if p is not None:
            neighbors.append(p)
        for v in neighbors:
            if v in allowed and v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def path_centric_prune(tree, subj_span, obj_span, k):
    """Keep nodes of the LCA subtree within distance k of the dependency path."""
    if not (k in (INF, FULL) or (isinstance(k, int) and k >= 0)):
        raise ValueError(f"invalid pruning distance {k!r}")
    lca, path = lca_and_path(tree, subj_span, obj_span)
    subtree = _subtree_nodes(tree, lca)
    if k == FULL:
        dist = _bfs_dist_from(tree, path, set(range(tree.n)))
        kept = frozenset(range(tree.n))
    else:
        dist = _bfs_dist_from(tree, path, subtree)
        if k == INF:
            kept = frozenset(subtree)
        else:
            kept = frozenset(v for v, d in dist.items() if d <= k)
    dist = {v: d for v, d in dist.items() if v in kept}
    return PruneResult(k=k, lca=lca, path_nodes=path, kept=kept, dist=dist)


def build_adjacency(prune, tree):
    """Compact adjacency over kept nodes.

    Returns (node_order, A, A_tilde, d) where node_order maps compact
    index -> sentence index in ascending sentence position, A is the
    symmetrized 0/1 adjacency, A_tilde adds self-loops, and d is the
    row-sum degree vector of A_tilde.
    """
    if not prune.kept:
        raise EmptyKeptError("pruning produced an empty node set")
    node_order = sorted(prune.kept)
    pos = {v: i for i, v in enumerate(node_order)}
    m = len(node_order)
    a = np.zeros((m, m), dtype=np.float64)
    for v in node_order:
        p = _parent(tree, v)
        if p is not None and p in prune.kept:
            a[pos[v], pos[p]] = 1.0
            a[pos[p], pos[v]] = 1.0
    a_tilde = a + np.eye(m)
    d = a_tilde.sum(axis=1)
    return node_order, a, a_tilde, d
