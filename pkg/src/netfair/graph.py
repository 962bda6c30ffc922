"""Undirected graphs, k-hop neighbourhoods and Weisfeiler-Lehman colouring."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset
    adjacency: tuple = field(repr=False)

    @property
    def num_edges(self):
        return len(self.edges)

    def degree(self):
        return np.array([len(nb) for nb in self.adjacency], dtype=np.int64)

    def edge_array(self):
        """Edges as a sorted ``(m, 2)`` int array with ``i < j`` per row."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.edges), dtype=np.int64)

    def adjacency_matrix(self, self_loops=False):
        e = self.edge_array()
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        mat = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        if self_loops:
            mat = mat + sp.identity(self.n, format="csr")
        return mat

    def permute(self, perm):
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return build_graph(self.n, [(int(perm[i]), int(perm[j])) for i, j in self.edges])


def build_graph(n, edge_list, *, dedupe=False):
    """Normalise an undirected edge list.

    Duplicate pairs (in either orientation) and self-loops raise unless
    ``dedupe`` is set, in which case duplicates are dropped silently.
    """
    if n < 1:
        raise GraphError(f"graph needs at least one node, got n={n}")
    edges = set()
    for pair in edge_list:
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise GraphError(f"self-loop ({i}, {j}) not allowed")
        key = (min(i, j), max(i, j))
        if key in edges:
            if dedupe:
                continue
            raise GraphError(f"duplicate edge ({i}, {j})")
        edges.add(key)
    nbrs = [[] for _ in range(n)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    return Graph(n, frozenset(edges), tuple(tuple(sorted(nb)) for nb in nbrs))


@dataclass(frozen=True)
class NeighborhoodView:
    center: int
    hops: int
    members: tuple

    def __contains__(self, node):
        return node in self.members


def k_hop_neighborhood(g, i, k):
    if not 0 <= i < g.n:
        raise GraphError(f"node {i} out of range for n={g.n}")
    if k < 0:
        raise GraphError(f"hops must be non-negative, got {k}")
    depth = {i: 0}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if depth[u] == k:
            continue
        for v in g.adjacency[u]:
            if v not in depth:
                depth[v] = depth[u] + 1
                queue.append(v)
    return NeighborhoodView(i, k, tuple(sorted(depth)))


@dataclass(frozen=True)
class ColorMap:
    round: int
    colors: np.ndarray

    @property
    def num_colors(self):
        return int(self.colors.max()) + 1 if len(self.colors) else 0

    def classes(self):
        out = {}
        for node, c in enumerate(self.colors):
            out.setdefault(int(c), []).append(node)
        return out


def wl_refine(g, labels):
    """One refinement step; returns new dense ids in first-occurrence order."""
    table = {}
    out = np.empty(g.n, dtype=np.int64)
    for i in range(g.n):
        key = (int(labels[i]), tuple(sorted(int(labels[j]) for j in g.adjacency[i])))
        out[i] = table.setdefault(key, len(table))
    return out


def wl_colors(g, rounds, initial=None):
    """Weisfeiler-Lehman colours after ``rounds`` refinements.

    ``initial`` optionally seeds node labels (any hashables); by default all
    nodes start with the same colour.
    """
    if rounds < 1:
        raise GraphError(f"rounds must be >= 1, got {rounds}")
    if initial is None:
        labels = np.zeros(g.n, dtype=np.int64)
    else:
        seen = {}
        labels = np.array([seen.setdefault(v, len(seen)) for v in initial], dtype=np.int64)
    for _ in range(rounds):
        labels = wl_refine(g, labels)
    return ColorMap(rounds, labels)


def computation_tree(g, i, depth, labels=None):
    """Canonical nested-tuple signature of node ``i``'s depth-``depth`` unrolling.

    Unlike colour ids this signature is comparable across graphs and label
    assignments.
    """
    memo = {}

    def sig(u, d):
        key = (u, d)
        if key not in memo:
            own = None if labels is None else labels[u]
            if d == 0:
                memo[key] = (own,)
            else:
                memo[key] = (own, tuple(sorted(sig(v, d - 1) for v in g.adjacency[u])))
        return memo[key]

    return sig(i, depth)


def color_multiset(cmap, nodes):
    return Counter(int(cmap.colors[i]) for i in nodes)


# ------------------------------------------------------------------- text io

def read_edge_list(path, n=None):
    """Parse the ``src,dst`` edge file; ``n`` defaults to ``max index + 1``."""
    pairs = []
    with open(path) as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "src,dst":
            raise GraphError(f"{path}: expected header 'src,dst', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'i,j', got {line!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphError(f"{path}:{lineno}: non-integer node index in {line!r}") from None
    if n is None:
        n = 1 + max((max(p) for p in pairs), default=0)
    for lineno, (i, j) in enumerate(pairs, start=2):
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"{path}:{lineno}: edge ({i}, {j}) references a node outside [0, {n})")
    return pairs, n


def write_edge_list(path, g):
    with open(path, "w") as fh:
        fh.write("src,dst\n")
        for i, j in g.edge_array():
            fh.write(f"{i},{j}\n")
