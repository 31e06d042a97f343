"""Quadratic-cost reference implementations used to certify the DP kernels.

Nothing here shares code with the aggregation/propagation sweeps: the dense
similarity matrix is built from explicit path distances, the forward output
is a dense matrix product, and the gradients are evaluated edge by edge from
the closed-form derivative of the normalized weighted average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .spanning_tree import SpanningTree
from .tree_filter import Gradients


def tree_path_distance(tree: SpanningTree, i: int, j: int) -> float:
    """Sum of edge dissimilarities on the tree path between ``i`` and ``j``."""
    for v in (i, j):
        if not 0 <= v < tree.n:
            raise IndexError(f"vertex {v} outside 0..{tree.n - 1}")
    up_i, up_j = [], []
    while tree.depth[i] > tree.depth[j]:
        up_i.append(tree.parent_weight[i])
        i = tree.parent[i]
    while tree.depth[j] > tree.depth[i]:
        up_j.append(tree.parent_weight[j])
        j = tree.parent[j]
    while i != j:
        up_i.append(tree.parent_weight[i])
        up_j.append(tree.parent_weight[j])
        i, j = tree.parent[i], tree.parent[j]
    return math.fsum(up_i + up_j)


def preorder(tree: SpanningTree):
    """DFS preorder position of each vertex and subtree sizes.

    The subtree of ``v`` occupies positions ``tin[v] .. tin[v] + size[v] - 1``.
    """
    n = tree.n
    tin = np.empty(n, dtype=np.int64)
    stack = [tree.root]
    t = 0
    while stack:
        v = stack.pop()
        tin[v] = t
        t += 1
        stack.extend(tree.children_of(v)[::-1].tolist())
    size = np.ones(n, dtype=np.int64)
    for v in tree.order[::-1]:
        p = tree.parent[v]
        if p >= 0:
            size[p] += size[v]
    return tin, size


def distance_matrix(tree: SpanningTree) -> np.ndarray:
    """All-pairs tree path distances, exactly symmetric with a zero diagonal."""
    n = tree.n
    tin, size = preorder(tree)
    w = tree.parent_weight
    # rows: column vertex v; columns: preorder position of the other endpoint
    dt = np.empty((n, n))
    for v in tree.order[::-1]:
        lo = tin[v]
        dt[v, lo] = 0.0
        for c in tree.children_of(v):
            a, b = tin[c], tin[c] + size[c]
            dt[v, a:b] = dt[c, a:b] + w[c]
    for v in tree.order[1:]:
        p = tree.parent[v]
        lo, hi = tin[v], tin[v] + size[v]
        dt[v, :lo] = dt[p, :lo] + w[v]
        dt[v, hi:] = dt[p, hi:] + w[v]
    d = dt[:, tin].T
    return 0.5 * (d + d.T)


@dataclass(frozen=True)
class DenseFilterMatrix:
    """Explicit filter: ``matrix[i, j] = similarity[i, j] / z[i]``."""

    similarity: np.ndarray
    z: np.ndarray
    matrix: np.ndarray
    evaluations: int  # number of exp() similarity evaluations


def dense_filter_matrix(tree: SpanningTree) -> DenseFilterMatrix:
    sim = np.exp(-distance_matrix(tree))
    z = sim.sum(axis=1)
    return DenseFilterMatrix(sim, z, sim / z[:, None], sim.size)


def _channels(x):
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 1 else x


def brute_forward(tree: SpanningTree, x, dense: DenseFilterMatrix | None = None) -> np.ndarray:
    x = _channels(x)
    if dense is None:
        dense = dense_filter_matrix(tree)
    return x @ dense.matrix.T


def brute_backward(tree: SpanningTree, x, grad_y, dense: DenseFilterMatrix | None = None) -> Gradients:
    """Direct per-edge evaluation of the input and dissimilarity gradients.

    For an edge ``(k, m)`` and output vertex ``i`` on the ``k`` side, the
    derivative of ``y_i`` is
    ``S(i,k)/z_i * dS(k,m)/dw * (sum_{j beyond m} S(m,j) x_j - y_i * sum_{j beyond m} S(m,j))``.
    """
    x = _channels(x)
    phi = _channels(grad_y)
    if dense is None:
        dense = dense_filter_matrix(tree)
    y = x @ dense.matrix.T
    grad_x = phi @ dense.matrix

    tin, size = preorder(tree)
    perm = np.argsort(tin)
    sp = dense.similarity[np.ix_(perm, perm)]
    xp, php, yp, zp = x[:, perm], phi[:, perm], y[:, perm], dense.z[perm]
    phi_y = np.einsum("cn,cn->n", php, yp)
    n = tree.n
    child = tree.edge_child
    grad_omega = np.zeros(tree.edge_count)
    for e in range(tree.edge_count):
        v = child[e]
        p = tree.parent[v]
        tv, tp = tin[v], tin[p]
        lo, hi = tv, tv + size[v]
        d_sim = -math.exp(-tree.parent_weight[v])

        # outputs outside the subtree of v: k = p, m = v, far side = subtree(v)
        s_m = sp[tv, lo:hi]
        far_x = xp[:, lo:hi] @ s_m
        far_norm = s_m.sum()
        coeff = sp[tp] / zp
        resid = far_x @ php - far_norm * phi_y
        outside = np.dot(coeff[:lo], resid[:lo]) + np.dot(coeff[hi:], resid[hi:])

        # outputs inside the subtree of v: k = v, m = p, far side = complement
        s_m = sp[tp]
        far_x = xp[:, :lo] @ s_m[:lo] + xp[:, hi:] @ s_m[hi:]
        far_norm = s_m[:lo].sum() + s_m[hi:].sum()
        coeff = sp[tv, lo:hi] / zp[lo:hi]
        resid = far_x @ php[:, lo:hi] - far_norm * phi_y[lo:hi]
        inside = np.dot(coeff, resid)

        grad_omega[e] = d_sim * (outside + inside)
    return Gradients(grad_x=grad_x, grad_omega=grad_omega)


def finite_difference_grad(tree: SpanningTree, x, loss, h: float = 1e-5, forward_fn=None) -> Gradients:
    """Central differences of ``loss(forward_fn(tree, x))`` in every x entry and edge weight.

    ``forward_fn`` defaults to :func:`brute_forward`.  For the input
    gradient the dense filter is built once, since it does not depend on x.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValidationError(f"step {h} outside [1e-7, 1e-3]")
    x = _channels(x).copy()

    def value(y):
        out = float(loss(y))
        if not math.isfinite(out):
            raise ValidationError("loss is not finite")
        return out

    if forward_fn is None:
        dense = dense_filter_matrix(tree)
        fx = lambda xv: brute_forward(tree, xv, dense)  # noqa: E731
        fw = lambda t: brute_forward(t, x)  # noqa: E731
    else:
        fx = lambda xv: forward_fn(tree, xv)  # noqa: E731
        fw = lambda t: forward_fn(t, x)  # noqa: E731

    grad_x = np.zeros_like(x)
    for c in range(x.shape[0]):
        for j in range(x.shape[1]):
            orig = x[c, j]
            x[c, j] = orig + h
            up = value(fx(x))
            x[c, j] = orig - h
            down = value(fx(x))
            x[c, j] = orig
            grad_x[c, j] = (up - down) / (2 * h)

    w = tree.edge_weights.copy()
    grad_omega = np.zeros(tree.edge_count)
    for e in range(tree.edge_count):
        orig = w[e]
        w[e] = orig + h
        up = value(fw(tree.with_edge_weights(w)))
        w[e] = orig - h
        down = value(fw(tree.with_edge_weights(w)))
        w[e] = orig
        grad_omega[e] = (up - down) / (2 * h)
    return Gradients(grad_x=grad_x, grad_omega=grad_omega)
