"""Minimum spanning trees over grid graphs and their rooted traversal structure.

Edges are totally ordered by ``(weight, edge index)``.  Under that order the
MST is unique, so Borůvka and Kruskal return the same edge set even when
weights tie.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConnectivityError, DimensionError, StructureError, ValidationError
from .grid_graph import PlanarGraph


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i):
        parent = self.parent
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(self, i, j):
        """Merge the sets holding ``i`` and ``j``; False if already merged."""
        i, j = self.find(i), self.find(j)
        if i == j:
            return False
        if self.size[i] < self.size[j]:
            i, j = j, i
        self.parent[j] = i
        self.size[i] += self.size[j]
        return True


def _weights_of(graph: PlanarGraph) -> np.ndarray:
    if graph.weights is None:
        raise ValidationError("graph has no edge weights; run pairwise_dissimilarity first")
    w = np.asarray(graph.weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValidationError("edge weights must be finite")
    return w


def edge_rank_order(weights: np.ndarray) -> np.ndarray:
    """Edge indices sorted by ``(weight, index)``."""
    return np.lexsort((np.arange(len(weights)), weights))


def boruvka_mst(graph: PlanarGraph) -> np.ndarray:
    """Contractive Borůvka MST; returns the ``N - 1`` selected edge indices, ascending.

    Every round each component picks its cheapest incident edge, components
    are merged by pointer jumping, and the edge list is contracted: self
    loops are dropped and parallel edges between the same pair of components
    are reduced to the cheapest one.
    """
    n = graph.vertex_count
    w = _weights_of(graph)
    by_rank = edge_rank_order(w)
    # Live edges are kept sorted by rank, so position order == (weight, index) order.
    u = graph.edges[by_rank, 0].astype(np.int64)
    v = graph.edges[by_rank, 1].astype(np.int64)
    ids = by_rank.astype(np.int64)
    components = n
    chosen = []
    while components > 1:
        m = len(ids)
        if m == 0:
            raise ConnectivityError(f"graph splits into {components} components")
        pos = np.arange(m)
        best = np.full(components, m, dtype=np.int64)
        np.minimum.at(best, u, pos)
        np.minimum.at(best, v, pos)
        if np.any(best == m):
            raise ConnectivityError("graph has an isolated component")
        chosen.append(ids[np.unique(best)])

        comp = np.arange(components)
        hook = np.where(u[best] == comp, v[best], u[best])
        # Under a strict edge order the only cycles are mutual pairs; the smaller id roots them.
        mutual = (hook[hook] == comp) & (comp < hook)
        hook[mutual] = comp[mutual]
        while True:
            jumped = hook[hook]
            if np.array_equal(jumped, hook):
                break
            hook = jumped
        roots, label = np.unique(hook, return_inverse=True)
        components = len(roots)

        u, v = label[u], label[v]
        keep = u != v
        u, v, ids = u[keep], v[keep], ids[keep]
        key = np.minimum(u, v) * components + np.maximum(u, v)
        _, first = np.unique(key, return_index=True)
        first.sort()
        u, v, ids = u[first], v[first], ids[first]
    if not chosen:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(chosen))


def kruskal_mst_oracle(graph: PlanarGraph) -> np.ndarray:
    """Plain Kruskal with union-find; the reference for :func:`boruvka_mst`."""
    n = graph.vertex_count
    w = _weights_of(graph)
    uf = UnionFind(n)
    picked = []
    for e in edge_rank_order(w):
        a, b = graph.edges[e]
        if uf.union(int(a), int(b)):
            picked.append(int(e))
            if len(picked) == n - 1:
                break
    if len(picked) != n - 1:
        raise ConnectivityError("graph is not connected")
    return np.array(sorted(picked), dtype=np.int64)


def total_weight(graph: PlanarGraph, edge_ids) -> float:
    """Order-insensitive total: weights are sorted and summed exactly."""
    return math.fsum(sorted(_weights_of(graph)[np.asarray(edge_ids, dtype=np.int64)]))


def sample_root(n: int, seed: int = 0) -> int:
    """Seed-deterministic uniform draw from ``0..n-1``."""
    if n < 1:
        raise ValidationError("tree must have at least one vertex")
    return int(np.random.default_rng(seed).integers(n))


@dataclass(frozen=True)
class SpanningTree:
    """A spanning tree rooted at ``root`` together with its BFS schedule.

    Tree edges are stored in ascending source-graph edge order, independent
    of the root; ``parent_edge[v]`` indexes that list.  Per-vertex arrays use
    ``-1`` (or ``0.0`` for weights) at the root.
    """

    n: int
    root: int
    edge_ids: np.ndarray  # (N-1,) source graph edge indices, ascending
    endpoints: np.ndarray  # (N-1, 2)
    edge_weights: np.ndarray  # (N-1,) dissimilarity per tree edge
    parent: np.ndarray
    parent_edge: np.ndarray
    parent_weight: np.ndarray
    order: np.ndarray  # BFS order, root first
    depth: np.ndarray
    level_offsets: np.ndarray  # order[level_offsets[d]:level_offsets[d+1]] has depth d
    child_offsets: np.ndarray
    children: np.ndarray
    adj_indptr: np.ndarray
    adj_indices: np.ndarray
    adj_edge: np.ndarray  # tree-edge position for each adjacency slot

    @property
    def edge_count(self) -> int:
        return self.n - 1

    @property
    def edge_child(self) -> np.ndarray:
        """Child vertex of each tree edge under the current rooting."""
        child = np.empty(self.edge_count, dtype=np.int64)
        nonroot = self.parent >= 0
        child[self.parent_edge[nonroot]] = np.flatnonzero(nonroot)
        return child

    def children_of(self, v: int) -> np.ndarray:
        return self.children[self.child_offsets[v] : self.child_offsets[v + 1]]

    def levels(self):
        """Yield BFS-ordered vertex arrays, one per depth."""
        for d in range(len(self.level_offsets) - 1):
            yield self.order[self.level_offsets[d] : self.level_offsets[d + 1]]

    def similarity(self) -> np.ndarray:
        """Per-vertex parent-edge similarity ``exp(-w)``; zero at the root."""
        return edge_similarity(self)

    def with_edge_weights(self, weights) -> "SpanningTree":
        """Same topology and root with new per-tree-edge dissimilarities (clamped at 0)."""
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.edge_count,):
            raise DimensionError(
                f"expected {self.edge_count} tree edge weights, got shape {weights.shape}"
            )
        if not np.all(np.isfinite(weights)):
            raise ValidationError("tree edge weights must be finite")
        weights = np.maximum(weights, 0.0)
        parent_weight = np.zeros(self.n)
        nonroot = self.parent >= 0
        parent_weight[nonroot] = weights[self.parent_edge[nonroot]]
        return replace(self, edge_weights=weights, parent_weight=parent_weight)

    def reroot(self, root: int) -> "SpanningTree":
        return _build_rooted(self.n, self.edge_ids, self.endpoints, self.edge_weights, root)


def edge_similarity(tree: SpanningTree) -> np.ndarray:
    sim = np.exp(-np.maximum(tree.parent_weight, 0.0))
    sim[tree.root] = 0.0
    return sim


def _adjacency(n, endpoints):
    """Undirected CSR adjacency with neighbors ascending in each row."""
    m = len(endpoints)
    src = np.concatenate([endpoints[:, 0], endpoints[:, 1]])
    dst = np.concatenate([endpoints[:, 1], endpoints[:, 0]])
    slot_edge = np.concatenate([np.arange(m), np.arange(m)])
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst[order].astype(np.int64), slot_edge[order].astype(np.int64)


def bfs_levels(indptr, indices, adj_edge, source):
    """Level-synchronous BFS over a CSR adjacency.

    Returns ``(order, parent, parent_edge, level_offsets)``.  Within a level,
    vertices appear in FIFO order with each vertex's unvisited neighbors in
    ascending index, i.e. exactly the order of a sequential queue-based BFS.
    """
    n = len(indptr) - 1
    parent = np.full(n, -1, dtype=np.int64)
    parent_edge = np.full(n, -1, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    visited[source] = True
    frontier = np.array([source], dtype=np.int64)
    chunks = [frontier]
    level_offsets = [0, 1]
    while True:
        starts = indptr[frontier]
        counts = indptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        run_start = np.repeat(np.cumsum(counts) - counts, counts)
        slots = np.arange(total) - run_start + np.repeat(starts, counts)
        src = np.repeat(frontier, counts)
        nbr = indices[slots]
        fresh = ~visited[nbr]
        if not fresh.any():
            break
        nbr, src, slots = nbr[fresh], src[fresh], slots[fresh]
        if len(np.unique(nbr)) != len(nbr):
            raise StructureError("edge set contains a cycle")
        visited[nbr] = True
        parent[nbr] = src
        parent_edge[nbr] = adj_edge[slots]
        chunks.append(nbr)
        level_offsets.append(level_offsets[-1] + len(nbr))
        frontier = nbr
    order = np.concatenate(chunks)
    return order, parent, parent_edge, np.array(level_offsets, dtype=np.int64)


def _build_rooted(n, edge_ids, endpoints, edge_weights, root) -> SpanningTree:
    root = int(root)
    if not 0 <= root < n:
        raise ValidationError(f"root {root} outside 0..{n - 1}")
    if len(endpoints) != n - 1:
        raise StructureError(f"a spanning tree over {n} vertices needs {n - 1} edges, got {len(endpoints)}")
    indptr, indices, adj_edge = _adjacency(n, endpoints)
    order, parent, parent_edge, level_offsets = bfs_levels(indptr, indices, adj_edge, root)
    if len(order) != n:
        raise StructureError("edge set does not span the graph")

    depth = np.empty(n, dtype=np.int64)
    for d in range(len(level_offsets) - 1):
        depth[order[level_offsets[d] : level_offsets[d + 1]]] = d

    parent_weight = np.zeros(n)
    nonroot = parent >= 0
    parent_weight[nonroot] = edge_weights[parent_edge[nonroot]]

    child_offsets = np.zeros(n + 1, dtype=np.int64)
    kids = np.flatnonzero(nonroot)
    np.cumsum(np.bincount(parent[kids], minlength=n), out=child_offsets[1:])
    children = kids[np.lexsort((kids, parent[kids]))]

    return SpanningTree(
        n=n,
        root=root,
        edge_ids=edge_ids,
        endpoints=endpoints,
        edge_weights=edge_weights,
        parent=parent,
        parent_edge=parent_edge,
        parent_weight=parent_weight,
        order=order,
        depth=depth,
        level_offsets=level_offsets,
        child_offsets=child_offsets,
        children=children,
        adj_indptr=indptr,
        adj_indices=indices,
        adj_edge=adj_edge,
    )


def root_tree(edges, graph: PlanarGraph, root: int) -> SpanningTree:
    """Root the spanning tree given by ``edges`` (graph edge indices) at ``root``."""
    edge_ids = np.sort(np.asarray(edges, dtype=np.int64))
    if len(edge_ids) and (edge_ids[0] < 0 or edge_ids[-1] >= graph.edge_count):
        raise StructureError("edge index out of range")
    if len(np.unique(edge_ids)) != len(edge_ids):
        raise StructureError("duplicate edges in spanning tree")
    endpoints = graph.edges[edge_ids].astype(np.int64)
    if graph.weights is None:
        weights = np.zeros(len(edge_ids))
    else:
        weights = np.maximum(np.asarray(graph.weights, dtype=np.float64)[edge_ids], 0.0)
    return _build_rooted(graph.vertex_count, edge_ids, endpoints, weights, root)


def minimum_spanning_tree(graph: PlanarGraph, seed: int = 0, root: int | None = None) -> SpanningTree:
    """Borůvka MST rooted at ``root`` (or a seed-sampled root)."""
    if root is None:
        root = sample_root(graph.vertex_count, seed)
    return root_tree(boruvka_mst(graph), graph, root)


def tree_from_edges(n: int, endpoints, weights=None, root: int = 0) -> SpanningTree:
    """Build a rooted tree from explicit ``(u, v)`` pairs; not tied to a grid."""
    endpoints = np.asarray(endpoints, dtype=np.int64).reshape(-1, 2)
    if weights is None:
        weights = np.zeros(len(endpoints))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(endpoints),):
        raise DimensionError("one weight per edge required")
    if not np.all(np.isfinite(weights)):
        raise ValidationError("tree edge weights must be finite")
    if len(endpoints) and (endpoints.min() < 0 or endpoints.max() >= n):
        raise StructureError("edge endpoint out of range")
    return _build_rooted(
        int(n), np.arange(len(endpoints), dtype=np.int64), endpoints, np.maximum(weights, 0.0), root
    )
