"""Command-line entry points: filter, affinity, gradcheck, bench.

Exit codes: 0 success, 1 usage or parse error, 2 validation error,
3 gradient-check tolerance breach.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .bench import run_scaling_benchmark
from .errors import ParseError, TreeFilterError, ValidationError
from .grid_graph import FeatureMap, build_planar_graph, edge_distances, pairwise_dissimilarity
from .reference_oracle import brute_backward, brute_forward, dense_filter_matrix, finite_difference_grad
from .spanning_tree import SpanningTree, boruvka_mst, root_tree, sample_root
from .tree_filter import affinity_map, backward, forward, grouped_filter

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_TOLERANCE = 0, 1, 2, 3
REPORT_SCHEMA_VERSION = 1
GRADCHECK_MAX_SIDE = 64
ORACLE_REL_TOL = 1e-9
FD_ABS_TOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    guidance: str | None = None
    embedding: str | None = None
    output: str | None = None
    scale: float = 1.0
    groups: int = 1
    seed: int = 0
    residual: bool = False
    pos: tuple[int, int] | None = None
    sizes: list = field(default_factory=list)
    reps: int = 5
    channels: int = 3
    grid: tuple[int, int] = (16, 16)
    instances: int = 20
    brute_max: int = 4096


def _pair(text, sep):
    try:
        a, b = text.lower().split(sep)
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers separated by {sep!r}, got {text!r}")


def _sizes(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treefilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def maps(p):
        p.add_argument("--input", required=True, help="PPM/PGM image or LTF1 tensor")
        p.add_argument("--guidance", help="map that shapes the spanning tree (default: input)")
        p.add_argument("--embedding", help="map that sets edge weights (default: guidance)")
        p.add_argument("--scale", type=float, default=1.0, help="multiplier on edge distances")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output", required=True)

    p = sub.add_parser("filter", help="edge-aware smoothing of an image or tensor")
    maps(p)
    p.add_argument("--groups", type=int, default=1)
    p.add_argument("--residual", action="store_true", help="add the input to the filtered output")

    p = sub.add_parser("affinity", help="render the tree affinity of one pixel")
    maps(p)
    p.add_argument("--pos", type=lambda s: _pair(s, ","), required=True, metavar="R,C")

    p = sub.add_parser("gradcheck", help="compare DP, brute-force and finite-difference gradients")
    p.add_argument("--grid", type=lambda s: _pair(s, "x"), default=(16, 16), metavar="HxW")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="write the JSON report here instead of stdout")

    p = sub.add_parser("bench", help="runtime scaling of DP vs brute force")
    p.add_argument("--sizes", type=_sizes, required=True, help="comma-separated vertex counts")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--brute-max", type=int, default=4096, dest="brute_max")
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    return parser


def parse_config(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError("a subcommand is required: filter, affinity, gradcheck or bench")
    known = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in vars(ns).items() if k in known})


def _load(path, role):
    if not Path(path).is_file():
        raise UsageError(f"{role} file {path} does not exist")
    return formats.load_array(path)


def _load_maps(config):
    kind, raw = _load(config.input, "input")
    x = formats.to_feature_map(kind, raw)
    guidance = x
    if config.guidance:
        guidance = formats.to_feature_map(*_load(config.guidance, "guidance"))
    embedding = guidance
    if config.embedding:
        embedding = formats.to_feature_map(*_load(config.embedding, "embedding"))
    return kind, raw, x, guidance, embedding


def _guided_tree(guidance: FeatureMap, scale, seed) -> SpanningTree:
    graph = pairwise_dissimilarity(guidance, build_planar_graph(guidance.height, guidance.width), scale)
    return root_tree(boruvka_mst(graph), graph, sample_root(graph.vertex_count, seed))


def _emit(text, output):
    if output:
        Path(output).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_filter(config: RunConfig) -> int:
    kind, raw, x, guidance, embedding = _load_maps(config)
    y = grouped_filter(
        guidance,
        embedding,
        x,
        groups=config.groups,
        scale=config.scale,
        seed=config.seed,
        residual=config.residual,
    )
    result = formats.from_feature_map(kind, y, raw)
    if kind == "ltf":
        formats.write_tensor(config.output, result)
    else:
        formats.write_pnm(config.output, result)
    return EXIT_OK


def affinity_image(guidance: FeatureMap, embedding: FeatureMap, pos, scale=1.0, seed=0) -> np.ndarray:
    """Affinity of every pixel to ``pos`` as an ``H x W`` float array."""
    row, col = pos
    if not (0 <= row < guidance.height and 0 <= col < guidance.width):
        raise ValidationError(f"position {row},{col} outside {guidance.height}x{guidance.width}")
    if (embedding.height, embedding.width) != (guidance.height, guidance.width):
        raise ValidationError("embedding and guidance sizes differ")
    tree = _guided_tree(guidance, scale, seed)
    weights = edge_distances(embedding.flat().astype(np.float64), tree.endpoints, scale)
    tree = tree.with_edge_weights(weights)
    aff = affinity_map(tree, tree.similarity(), row * guidance.width + col)
    return aff.reshape(guidance.height, guidance.width)


def cmd_affinity(config: RunConfig) -> int:
    _, _, _, guidance, embedding = _load_maps(config)
    aff = affinity_image(guidance, embedding, config.pos, config.scale, config.seed)
    if config.output.endswith(".ltf"):
        formats.write_tensor(config.output, aff)
    else:
        formats.write_pnm(config.output, np.clip(np.rint(aff * 255.0), 0, 255).astype(np.uint8))
    return EXIT_OK


def _rel(a, b):
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(a - b)) / scale) if scale > 0 else float(np.max(np.abs(a - b)))


def _dp_forward(tree, x):
    return forward(tree, tree.similarity(), x)[0]


def gradcheck_instance(height, width, channels, seed, index):
    """Deviations between the three gradient routes on one seeded instance."""
    rng = np.random.default_rng([seed, index])
    n = height * width
    emb = rng.standard_normal((3, n))
    graph = build_planar_graph(height, width)
    graph = graph.with_weights(edge_distances(emb, graph.edges, rng.uniform(0.1, 1.0)))
    tree = root_tree(boruvka_mst(graph), graph, sample_root(n, seed + index))
    sim = tree.similarity()
    x = rng.uniform(-1, 1, (channels, n))
    phi = rng.uniform(-1, 1, (channels, n))

    y, cache = forward(tree, sim, x)
    dp = backward(tree, sim, cache, phi)
    dense = dense_filter_matrix(tree)
    ref = brute_backward(tree, x, phi, dense)
    fd = finite_difference_grad(tree, x, lambda out: float(np.sum(phi * out)), 1e-5, _dp_forward)
    return {
        "forward_rel": _rel(y, brute_forward(tree, x, dense)),
        "grad_x_rel": _rel(dp.grad_x, ref.grad_x),
        "grad_omega_rel": _rel(dp.grad_omega, ref.grad_omega),
        "fd_grad_x_abs": float(max(np.max(np.abs(fd.grad_x - dp.grad_x)), np.max(np.abs(fd.grad_x - ref.grad_x)))),
        "fd_grad_omega_abs": float(
            max(np.max(np.abs(fd.grad_omega - dp.grad_omega)), np.max(np.abs(fd.grad_omega - ref.grad_omega)))
        ),
    }


GRADCHECK_TOLERANCES = {
    "forward_rel": ORACLE_REL_TOL,
    "grad_x_rel": ORACLE_REL_TOL,
    "grad_omega_rel": ORACLE_REL_TOL,
    "fd_grad_x_abs": FD_ABS_TOL,
    "fd_grad_omega_abs": FD_ABS_TOL,
}


def cmd_gradcheck(config: RunConfig) -> int:
    height, width = config.grid
    if not (1 <= height <= GRADCHECK_MAX_SIDE and 1 <= width <= GRADCHECK_MAX_SIDE and height * width >= 2):
        raise UsageError(f"gradcheck grids must be between 1x2 and {GRADCHECK_MAX_SIDE}x{GRADCHECK_MAX_SIDE}")
    if config.instances < 1 or config.channels < 1:
        raise UsageError("instances and channels must be positive")
    worst = dict.fromkeys(GRADCHECK_TOLERANCES, 0.0)
    for k in range(config.instances):
        for key, value in gradcheck_instance(height, width, config.channels, config.seed, k).items():
            worst[key] = max(worst[key], value)
    passed = all(worst[k] < tol for k, tol in GRADCHECK_TOLERANCES.items())
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "gradcheck",
        "config": {
            "grid": [height, width],
            "channels": config.channels,
            "instances": config.instances,
            "seed": config.seed,
            "fd_step": 1e-5,
        },
        "max_deviation": worst,
        "tolerances": GRADCHECK_TOLERANCES,
        "passed": passed,
    }
    _emit(json.dumps(report, indent=2, sort_keys=True), config.output)
    return EXIT_OK if passed else EXIT_TOLERANCE


def cmd_bench(config: RunConfig) -> int:
    if not config.sizes:
        raise UsageError("--sizes must list at least one vertex count")
    if config.reps < 5:
        raise UsageError("--reps must be at least 5")
    report = run_scaling_benchmark(
        config.sizes, channels=config.channels, reps=config.reps, seed=config.seed, brute_max=config.brute_max
    )
    _emit(report.to_json(), config.output)
    return EXIT_OK


COMMANDS = {
    "filter": cmd_filter,
    "affinity": cmd_affinity,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        config = parse_config(sys.argv[1:] if argv is None else argv)
        return COMMANDS[config.command](config)
    except (UsageError, ParseError) as exc:
        print(f"treefilter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TreeFilterError as exc:
        print(f"treefilter: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
