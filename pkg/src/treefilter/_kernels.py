"""Aggregation/propagation kernels.

Two schedules compute the same recursions:

* ``seq``: one compiled loop over the BFS order.
* ``level``: vectorized numpy, one depth level at a time with a barrier
  between levels.  Contributions reach each parent in the same order as in
  the sequential loop, so both schedules agree bit for bit.

Arrays are ``K x N``; every kernel returns ``(result, vertex_visits)``.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def aggregate_seq(order, parent, sim, xi):
    out = xi.copy()
    channels = out.shape[0]
    visits = 0
    for t in range(order.shape[0] - 1, -1, -1):
        v = order[t]
        visits += 1
        p = parent[v]
        if p >= 0:
            s = sim[v]
            for k in range(channels):
                out[k, p] += s * out[k, v]
    return out, visits


@njit(cache=True, nogil=True)
def propagate_seq(order, parent, sim, blend, aggr):
    out = np.empty_like(aggr)
    channels = aggr.shape[0]
    visits = 0
    for t in range(order.shape[0]):
        v = order[t]
        visits += 1
        p = parent[v]
        if p < 0:
            for k in range(channels):
                out[k, v] = aggr[k, v]
        else:
            s = sim[v]
            b = blend[v]
            for k in range(channels):
                out[k, v] = s * out[k, p] + b * aggr[k, v]
    return out, visits


def aggregate_level(order, level_offsets, parent, sim, xi):
    out = np.ascontiguousarray(xi.T).copy()
    visits = 0
    for d in range(len(level_offsets) - 2, -1, -1):
        idx = order[level_offsets[d] : level_offsets[d + 1]][::-1]
        visits += len(idx)
        if d == 0:
            continue
        np.add.at(out, parent[idx], sim[idx, None] * out[idx])
    return np.ascontiguousarray(out.T), visits


def propagate_level(order, level_offsets, parent, sim, blend, aggr):
    src = np.ascontiguousarray(aggr.T)
    out = np.empty_like(src)
    root = order[:1]
    out[root] = src[root]
    visits = 1
    for d in range(1, len(level_offsets) - 1):
        idx = order[level_offsets[d] : level_offsets[d + 1]]
        visits += len(idx)
        out[idx] = sim[idx, None] * out[parent[idx]] + blend[idx, None] * src[idx]
    return np.ascontiguousarray(out.T), visits
