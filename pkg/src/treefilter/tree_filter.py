"""Linear-time tree filtering with analytic gradients.

The filter output at vertex ``i`` is the similarity-weighted mean of all
inputs, where the similarity between two vertices is the product of
``exp(-w)`` over the tree path joining them.  Both the output and the
gradients are computed with two O(N) sweeps over the tree: an aggregation
from the leaves up to the root and a propagation from the root back down.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionError, GroupingError, StateError, ValidationError
from .grid_graph import FeatureMap, build_planar_graph, edge_distances, pairwise_dissimilarity
from .spanning_tree import SpanningTree, boruvka_mst, root_tree, sample_root

SCHEDULES = ("seq", "level")


@dataclass
class WorkCounter:
    """Vertex-visit tally, keyed by pass name."""

    visits: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, name: str, count: int) -> None:
        with self._lock:
            self.visits[name] = self.visits.get(name, 0) + int(count)

    @property
    def total(self) -> int:
        return sum(self.visits.values())

    def reset(self) -> None:
        self.visits.clear()


@dataclass(frozen=True)
class FilterCache:
    """Forward intermediates reused by :func:`backward`."""

    rho_hat: np.ndarray  # aggregated input, C x N
    z_hat: np.ndarray  # aggregated ones, N
    rho: np.ndarray  # propagated input, C x N
    z: np.ndarray  # normalization, N
    y: np.ndarray  # output, C x N
    root: int
    sim: np.ndarray


@dataclass(frozen=True)
class Gradients:
    grad_x: np.ndarray  # C x N
    grad_omega: np.ndarray  # one entry per tree edge, in tree.edge_ids order


def propagation_blend(sim: np.ndarray) -> np.ndarray:
    """Weight on a vertex's own aggregate in the propagation sweep."""
    return 1.0 - sim * sim


def _as_channels(arr, n, name, dtype=None):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise DimensionError(f"{name} must be K x {n}, got shape {arr.shape}")
    if dtype is None:
        dtype = np.float32 if arr.dtype == np.float32 else np.float64
    return np.ascontiguousarray(arr, dtype=dtype)


def _check_sim(tree, sim, dtype=np.float64):
    sim = np.asarray(sim)
    if sim.shape != (tree.n,):
        raise DimensionError(f"similarity must have {tree.n} entries, got shape {sim.shape}")
    return np.ascontiguousarray(sim, dtype=dtype)


def _check_schedule(schedule):
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}, got {schedule!r}")


def _aggregate(tree, sim, xi, schedule, counter, name):
    if schedule == "seq":
        out, visits = _kernels.aggregate_seq(tree.order, tree.parent, sim, xi)
    else:
        out, visits = _kernels.aggregate_level(tree.order, tree.level_offsets, tree.parent, sim, xi)
    if counter is not None:
        counter.add(name, visits)
    return out


def _propagate(tree, sim, aggr, schedule, counter, name):
    blend = np.ascontiguousarray(propagation_blend(sim), dtype=sim.dtype)
    if schedule == "seq":
        out, visits = _kernels.propagate_seq(tree.order, tree.parent, sim, blend, aggr)
    else:
        out, visits = _kernels.propagate_level(
            tree.order, tree.level_offsets, tree.parent, sim, blend, aggr
        )
    if counter is not None:
        counter.add(name, visits)
    return out


def aggregate(tree: SpanningTree, sim, xi, schedule="seq", counter=None) -> np.ndarray:
    """Leaf-to-root sweep: each vertex adds its children's sums scaled by edge similarity."""
    _check_schedule(schedule)
    xi = _as_channels(xi, tree.n, "xi")
    return _aggregate(tree, _check_sim(tree, sim, xi.dtype), xi, schedule, counter, "aggregate")


def propagate(tree: SpanningTree, sim, aggr, schedule="seq", counter=None) -> np.ndarray:
    """Root-to-leaf sweep turning subtree sums into sums over the whole tree."""
    _check_schedule(schedule)
    aggr = _as_channels(aggr, tree.n, "aggr")
    return _propagate(tree, _check_sim(tree, sim, aggr.dtype), aggr, schedule, counter, "propagate")


def forward(tree: SpanningTree, sim, x, schedule="seq", counter=None):
    """Filter ``x`` (``C x N``) over ``tree``; returns ``(y, cache)``.

    The normalization is obtained by filtering an all-ones row alongside
    the input in the same two sweeps.
    """
    _check_schedule(schedule)
    x = _as_channels(x, tree.n, "x")
    if not np.all(np.isfinite(x)):
        raise ValidationError("input feature contains non-finite values")
    sim = _check_sim(tree, sim, x.dtype)
    channels = x.shape[0]
    stacked = np.empty((channels + 1, tree.n), dtype=x.dtype)
    stacked[:channels] = x
    stacked[channels] = 1.0
    agg = _aggregate(tree, sim, stacked, schedule, counter, "forward")
    prop = _propagate(tree, sim, agg, schedule, counter, "forward")
    z = prop[channels]
    y = prop[:channels] / z
    cache = FilterCache(
        rho_hat=agg[:channels],
        z_hat=agg[channels],
        rho=prop[:channels],
        z=z,
        y=y,
        root=tree.root,
        sim=sim,
    )
    return y, cache


def backward(tree: SpanningTree, sim, cache: FilterCache, grad_y, schedule="seq", counter=None) -> Gradients:
    """Gradients of a loss w.r.t. the input and the tree edge dissimilarities.

    ``grad_y`` is dloss/dy with the shape of the forward output.
    """
    _check_schedule(schedule)
    if cache.root != tree.root or cache.z.shape != (tree.n,):
        raise StateError("cache was produced on a different tree")
    sim = _check_sim(tree, sim, cache.y.dtype)
    if not np.array_equal(sim, cache.sim):
        raise StateError("cache was produced with different edge similarities")
    phi = np.asarray(grad_y)
    if phi.ndim == 1:
        phi = phi[None]
    if phi.shape != cache.y.shape:
        raise StateError(f"grad_y shape {phi.shape} does not match output {cache.y.shape}")
    phi = phi.astype(cache.y.dtype, copy=False)

    channels = phi.shape[0]
    z = cache.z
    stacked = np.empty((channels + 1, tree.n), dtype=phi.dtype)
    stacked[:channels] = phi / z
    # The normalization gradient only enters summed over channels.
    stacked[channels] = np.einsum("cn,cn->n", phi, cache.y) / z
    agg = _aggregate(tree, sim, stacked, schedule, counter, "backward")
    prop = _propagate(tree, sim, agg, schedule, counter, "backward")
    psi_hat, nu_hat = agg[:channels], agg[channels]
    psi, nu = prop[:channels], prop[channels]

    # For the edge above v with similarity s, the far-side sums are
    # (rho[v] - rho_hat[v]) / s and (psi[v] - psi_hat[v]) / s, so
    # gamma = s * dloss/ds needs only v's own values, and dloss/dw = -gamma.
    v = np.flatnonzero(tree.parent >= 0)
    rho_hat, z_hat = cache.rho_hat[:, v], cache.z_hat[v]
    gamma_s = np.einsum("cv,cv->v", psi_hat[:, v], cache.rho[:, v] - 2.0 * rho_hat) + np.einsum(
        "cv,cv->v", psi[:, v], rho_hat
    )
    gamma_z = nu_hat[v] * (z[v] - 2.0 * z_hat) + nu[v] * z_hat
    grad_omega = np.zeros(tree.edge_count, dtype=phi.dtype)
    grad_omega[tree.parent_edge[v]] = gamma_z - gamma_s
    return Gradients(grad_x=psi, grad_omega=grad_omega)


def tree_edge_similarity(tree: SpanningTree, sim) -> np.ndarray:
    """Re-index per-vertex similarities by tree edge."""
    sim = _check_sim(tree, sim)
    v = np.flatnonzero(tree.parent >= 0)
    out = np.empty(tree.edge_count)
    out[tree.parent_edge[v]] = sim[v]
    return out


# Stand-in dissimilarity for edges whose similarity underflowed to zero.
_SEVERED = 1e4


def affinity_map(tree: SpanningTree, sim, i: int) -> np.ndarray:
    """Similarity of every vertex to vertex ``i`` (exactly 1 at ``i`` itself).

    Path distances are formed as ``d(i) + d(j) - 2 d(lca)`` from root
    distances, which makes ``affinity_map(i)[j] == affinity_map(j)[i]``
    hold bit for bit.  One sweep over the BFS order.
    """
    i = int(i)
    if not 0 <= i < tree.n:
        raise IndexError(f"vertex {i} outside 0..{tree.n - 1}")
    sim = _check_sim(tree, sim)
    positive = sim > 0
    omega = np.where(positive, -np.log(np.where(positive, sim, 1.0)), _SEVERED)
    on_path = np.zeros(tree.n, dtype=bool)
    v = i
    while v >= 0:
        on_path[v] = True
        v = tree.parent[v]
    dist = np.zeros(tree.n)
    meet = np.zeros(tree.n)  # root distance of lca(i, j)
    for level in list(tree.levels())[1:]:
        par = tree.parent[level]
        dist[level] = dist[par] + omega[level]
        meet[level] = np.where(on_path[level], dist[level], meet[par])
    return np.exp(-np.maximum((dist[i] + dist) - 2.0 * meet, 0.0))


def _split(total, groups, what):
    if groups < 1 or total % groups:
        raise GroupingError(f"{total} {what} channels cannot be split into {groups} groups")
    return total // groups


def grouped_filter(
    guidance: FeatureMap,
    embedding: FeatureMap,
    x: FeatureMap,
    groups: int = 1,
    scale: float = 1.0,
    seed: int = 0,
    residual: bool = False,
    schedule: str = "seq",
    max_workers: int | None = None,
    tree: SpanningTree | None = None,
) -> FeatureMap:
    """Filter ``x`` along one guidance-built MST with per-group embedding weights.

    Embedding and input channels are cut into ``groups`` equal contiguous
    blocks; block ``g`` of ``x`` is filtered with dissimilarities computed
    from block ``g`` of the embedding.  With ``residual`` the input is added
    to the output.  ``tree`` skips MST construction when already known.
    """
    guidance, embedding, x = (m if isinstance(m, FeatureMap) else FeatureMap(m) for m in (guidance, embedding, x))
    hw = (x.height, x.width)
    if (guidance.height, guidance.width) != hw or (embedding.height, embedding.width) != hw:
        raise DimensionError("guidance, embedding and input must share their spatial size")
    emb_per = _split(embedding.channels, groups, "embedding")
    x_per = _split(x.channels, groups, "input")

    if tree is None:
        graph = pairwise_dissimilarity(guidance, build_planar_graph(*hw), scale)
        tree = root_tree(boruvka_mst(graph), graph, sample_root(graph.vertex_count, seed))

    emb_flat = embedding.flat().astype(np.float64, copy=False)
    x_flat = x.flat()

    def run(g):
        w = edge_distances(emb_flat[g * emb_per : (g + 1) * emb_per], tree.endpoints, scale)
        sub = tree.with_edge_weights(w)
        y, _ = forward(sub, sub.similarity(), x_flat[g * x_per : (g + 1) * x_per], schedule)
        return y

    if max_workers and max_workers > 1 and groups > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            parts = list(pool.map(run, range(groups)))
    else:
        parts = [run(g) for g in range(groups)]
    out = np.concatenate(parts, axis=0)
    if residual:
        out = out + x_flat
    return FeatureMap.from_flat(out, *hw)
