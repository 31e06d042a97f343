import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import enumerate_spanning_trees
from treefilter.errors import ConnectivityError, StructureError, ValidationError
from treefilter.grid_graph import PlanarGraph, build_planar_graph
from treefilter.spanning_tree import (
    boruvka_mst,
    kruskal_mst_oracle,
    root_tree,
    sample_root,
    total_weight,
    tree_from_edges,
)


def weighted(h, w, weights):
    return build_planar_graph(h, w).with_weights(weights)


def test_path_graph_is_its_own_mst():
    g = weighted(1, 3, [3.0, 1.0])
    assert boruvka_mst(g).tolist() == [0, 1]


def test_2x2_example():
    # edges (0,1),(2,3),(0,2),(1,3)
    g = weighted(2, 2, [5.0, 1.0, 2.0, 3.0])
    edges = boruvka_mst(g)
    best = min(
        math.fsum(g.weights[list(t)]) for t in enumerate_spanning_trees(4, g.edges.tolist())
    )
    assert best == 6.0
    assert edges.tolist() == [1, 2, 3]
    assert total_weight(g, edges) == best


def test_equal_weights_tie_break():
    g = weighted(3, 3, np.full(12, 0.25))
    edges = boruvka_mst(g)
    assert len(edges) == 8
    assert total_weight(g, edges) == 8 * 0.25
    # lowest-index edges win: all 6 horizontal edges, then the first column's verticals
    assert edges.tolist() == kruskal_mst_oracle(g).tolist() == [0, 1, 2, 3, 4, 5, 6, 9]


def test_single_edge():
    g = weighted(1, 2, [0.5])
    assert boruvka_mst(g).tolist() == kruskal_mst_oracle(g).tolist() == [0]


@pytest.mark.parametrize("h,w", [(2, 2), (2, 3), (3, 3)])
@pytest.mark.parametrize("levels", [3, 1000])
def test_matches_exhaustive_enumeration(h, w, levels):
    rng = np.random.default_rng(h * 10 + w + levels)
    g = build_planar_graph(h, w)
    for _ in range(10):
        g = g.with_weights(rng.integers(0, levels, g.edge_count).astype(float))
        best = min(
            math.fsum(g.weights[list(t)])
            for t in enumerate_spanning_trees(g.vertex_count, g.edges.tolist())
        )
        assert total_weight(g, boruvka_mst(g)) == best
        assert total_weight(g, kruskal_mst_oracle(g)) == best


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1), st.booleans())
def test_boruvka_agrees_with_kruskal(h, w, seed, ties):
    if h * w < 2:
        return
    rng = np.random.default_rng(seed)
    g = build_planar_graph(h, w)
    weights = rng.integers(0, 4, g.edge_count).astype(float) if ties else rng.random(g.edge_count)
    g = g.with_weights(weights)
    b, k = boruvka_mst(g), kruskal_mst_oracle(g)
    assert total_weight(g, b) == total_weight(g, k)
    assert np.array_equal(b, k)


def test_disconnected_graph():
    edges = np.array([[0, 1], [2, 3]])
    g = PlanarGraph(2, 2, edges, np.array([1.0, 1.0]))
    with pytest.raises(ConnectivityError):
        boruvka_mst(g)
    with pytest.raises(ConnectivityError):
        kruskal_mst_oracle(g)


def test_unweighted_graph_rejected():
    with pytest.raises(ValidationError):
        boruvka_mst(build_planar_graph(2, 2))


def test_root_path_in_middle():
    t = tree_from_edges(3, [(0, 1), (1, 2)], root=1)
    assert t.parent[0] == 1 and t.parent[2] == 1
    assert t.depth.tolist() == [1, 0, 1]


def test_root_path_at_end():
    t = tree_from_edges(3, [(0, 1), (1, 2)], root=0)
    assert t.order.tolist() == [0, 1, 2]


def test_star_rooted_at_leaf():
    t = tree_from_edges(5, [(4, 0), (4, 1), (4, 2), (4, 3)], root=0)
    assert t.depth[[1, 2, 3]].tolist() == [2, 2, 2]
    assert t.depth[4] == 1


def test_children_visited_ascending():
    t = tree_from_edges(5, [(2, 4), (2, 0), (2, 3), (2, 1)], root=2)
    assert t.order.tolist() == [2, 0, 1, 3, 4]
    assert t.children_of(2).tolist() == [0, 1, 3, 4]


def test_structure_errors():
    g = build_planar_graph(2, 2)
    with pytest.raises(StructureError):
        root_tree([0, 1], g, 0)  # too few edges
    with pytest.raises(StructureError):
        root_tree([0, 1, 1], g, 0)  # duplicate
    with pytest.raises(StructureError):
        tree_from_edges(4, [(0, 1), (1, 2), (2, 0)])  # cycle leaves 3 unreachable
    with pytest.raises(ValidationError):
        root_tree([0, 1, 2], g, 4)


def check_tree(t, graph):
    n = t.n
    assert t.order[0] == t.root and sorted(t.order.tolist()) == list(range(n))
    position = np.empty(n, dtype=int)
    position[t.order] = np.arange(n)
    assert t.parent[t.root] == -1 and t.depth[t.root] == 0
    for v in range(n):
        if v == t.root:
            continue
        p = t.parent[v]
        assert position[p] < position[v]
        assert t.depth[v] == t.depth[p] + 1
        e = t.edge_ids[t.parent_edge[v]]
        assert sorted(graph.edges[e].tolist()) == sorted([v, p])
        assert t.parent_weight[v] == graph.weights[e]
        # walking up reaches the root within n-1 steps
        steps, u = 0, v
        while u != t.root:
            u = t.parent[u]
            steps += 1
        assert steps <= n - 1


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_rooted_tree_invariants(h, w, seed):
    rng = np.random.default_rng(seed)
    g = build_planar_graph(h, w).with_weights(rng.random(h * (w - 1) + (h - 1) * w))
    edges = boruvka_mst(g)
    r1, r2 = rng.integers(h * w, size=2)
    t1, t2 = root_tree(edges, g, r1), root_tree(edges, g, r2)
    check_tree(t1, g)
    check_tree(t2, g)
    assert np.array_equal(t1.edge_ids, t2.edge_ids)
    assert np.array_equal(t1.reroot(int(r2)).parent, t2.parent)


def test_sample_root_deterministic():
    assert sample_root(1, 123) == 0
    assert sample_root(77, 5) == sample_root(77, 5)
    with pytest.raises(ValidationError):
        sample_root(0, 1)


def test_sample_root_uniform():
    from scipy import stats

    n, draws = 100, 100_000
    counts = np.bincount([sample_root(n, s) for s in range(draws)], minlength=n)
    expected = draws / n
    sigma = math.sqrt(draws * (1 / n) * (1 - 1 / n))
    assert np.all(np.abs(counts - expected) <= 3 * sigma)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert stats.chi2.sf(chi2, n - 1) > 1e-3
