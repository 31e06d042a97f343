"""Scaling benchmark: DP sweeps against the dense quadratic reference."""

from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import ValidationError
from .grid_graph import build_planar_graph, edge_distances
from .reference_oracle import brute_forward, dense_filter_matrix
from .spanning_tree import boruvka_mst, root_tree, sample_root
from .tree_filter import WorkCounter, backward, forward

SCHEMA_VERSION = 1
MIN_REPS = 5
MIN_WARMUP = 2
# Medians below this many clock ticks are too coarse to fit a slope to.
MIN_TICKS = 1000


@dataclass
class BenchRecord:
    n: int
    height: int
    width: int
    channels: int
    dp_forward_s: float
    dp_backward_s: float
    dp_forward_visits: int
    dp_backward_visits: int
    brute_forward_s: float | None = None
    brute_similarity_evals: int | None = None


@dataclass
class BenchReport:
    records: list
    channels: int
    reps: int
    warmup: int
    seed: int
    schedule: str
    dp_forward_slope: float | None
    dp_backward_slope: float | None
    brute_forward_slope: float | None
    environment: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schema_version"] = SCHEMA_VERSION
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def grid_shape(n: int) -> tuple[int, int]:
    """Most square ``H x W`` grid with exactly ``n`` vertices."""
    h = int(np.sqrt(n))
    while n % h:
        h -= 1
    return h, n // h


def loglog_slope(ns, times):
    pairs = [(n, t) for n, t in zip(ns, times) if t is not None]
    if len(pairs) < 2:
        return None
    ns, times = zip(*pairs)
    return float(np.polyfit(np.log(ns), np.log(times), 1)[0])


def _median_time(fn, reps, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def environment() -> dict:
    return {
        "threads": numba.get_num_threads(),
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "machine": platform.machine(),
        "build_profile": "numba-jit",
    }


def run_scaling_benchmark(
    sizes,
    channels: int = 4,
    reps: int = MIN_REPS,
    seed: int = 0,
    warmup: int = MIN_WARMUP,
    brute_max: int = 4096,
    schedule: str = "seq",
) -> BenchReport:
    """Time DP forward/backward (and brute forward up to ``brute_max``) per size."""
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValidationError("no benchmark sizes given")
    if sizes != sorted(sizes) or len(set(sizes)) != len(sizes):
        raise ValidationError("benchmark sizes must be strictly ascending")
    if sizes[0] < 2:
        raise ValidationError("benchmark sizes must be at least 2")
    if reps < MIN_REPS or warmup < MIN_WARMUP:
        raise ValidationError(f"need reps >= {MIN_REPS} and warmup >= {MIN_WARMUP}")

    tick = time.get_clock_info("perf_counter").resolution
    records = []
    for n in sizes:
        rng = np.random.default_rng([seed, n])
        h, w = grid_shape(n)
        graph = build_planar_graph(h, w)
        guide = rng.random((3, n))
        graph = graph.with_weights(edge_distances(guide, graph.edges, 4.0))
        tree = root_tree(boruvka_mst(graph), graph, sample_root(n, seed))
        sim = tree.similarity()
        x = rng.standard_normal((channels, n))
        phi = rng.standard_normal((channels, n))

        counter = WorkCounter()
        _, cache = forward(tree, sim, x, schedule, counter)
        backward(tree, sim, cache, phi, schedule, counter)

        fwd = _median_time(lambda: forward(tree, sim, x, schedule), reps, warmup)
        bwd = _median_time(lambda: backward(tree, sim, cache, phi, schedule), reps, warmup)
        if min(fwd, bwd) < MIN_TICKS * tick:
            raise ValidationError(
                f"N={n}: median {min(fwd, bwd):.3g}s is below timer resolution; "
                "raise reps or start from a larger size"
            )
        rec = BenchRecord(
            n=n,
            height=h,
            width=w,
            channels=channels,
            dp_forward_s=fwd,
            dp_backward_s=bwd,
            dp_forward_visits=counter.visits["forward"],
            dp_backward_visits=counter.visits["backward"],
        )
        if n <= brute_max:

            def brute():
                return brute_forward(tree, x, dense_filter_matrix(tree))

            rec.brute_forward_s = _median_time(brute, reps, warmup)
            rec.brute_similarity_evals = dense_filter_matrix(tree).evaluations
        records.append(rec)

    ns = [r.n for r in records]
    return BenchReport(
        records=records,
        channels=channels,
        reps=reps,
        warmup=warmup,
        seed=seed,
        schedule=schedule,
        dp_forward_slope=loglog_slope(ns, [r.dp_forward_s for r in records]),
        dp_backward_slope=loglog_slope(ns, [r.dp_backward_s for r in records]),
        brute_forward_slope=loglog_slope(ns, [r.brute_forward_s for r in records]),
        environment=environment(),
    )
