import itertools
import math

import numpy as np
import pytest

from treefilter.grid_graph import build_planar_graph, edge_distances
from treefilter.spanning_tree import boruvka_mst, root_tree, tree_from_edges

LN2 = math.log(2.0)


def random_grid_tree(rng, height, width, scale=None, root=None, emb_channels=3):
    """MST of a grid weighted by distances between random embeddings."""
    graph = build_planar_graph(height, width)
    if scale is None:
        scale = rng.uniform(0.1, 1.0)
    emb = rng.standard_normal((emb_channels, height * width))
    graph = graph.with_weights(edge_distances(emb, graph.edges, scale))
    if root is None:
        root = int(rng.integers(height * width))
    return root_tree(boruvka_mst(graph), graph, root)


def path_tree(weights, root=0):
    n = len(weights) + 1
    return tree_from_edges(n, [(i, i + 1) for i in range(n - 1)], weights, root)


def enumerate_spanning_trees(n, edges):
    """Every (n-1)-subset of edges that connects all vertices; brute force."""
    for subset in itertools.combinations(range(len(edges)), n - 1):
        label = list(range(n))

        def find(a):
            while label[a] != a:
                a = label[a]
            return a

        ok = True
        for e in subset:
            a, b = find(edges[e][0]), find(edges[e][1])
            if a == b:
                ok = False
                break
            label[a] = b
        if ok:
            yield subset


def rel_err(a, b):
    scale = np.max(np.abs(b))
    diff = np.max(np.abs(np.asarray(a) - np.asarray(b)))
    return diff / scale if scale > 0 else diff


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_acceptance_lines = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def emit(number, name, passed, detail):
        line = f"[criterion {number}] {name}: {'PASS' if passed else 'FAIL'} ({detail})"
        _acceptance_lines.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
