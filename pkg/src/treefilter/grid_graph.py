"""4-connected grid graphs and Euclidean edge dissimilarities.

Vertices are numbered row-major (``v = row * width + col``).  Edges are
enumerated horizontal-first, then vertical, each block in row-major order, so
edge indices are a pure function of the grid size.  Downstream tie-breaking
in the spanning-tree code relies on this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, SizingError, ValidationError


@dataclass(frozen=True)
class FeatureMap:
    """Dense ``C x H x W`` real tensor used as guidance, embedding or filter input."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or min(data.shape) < 1:
            raise DimensionError(f"feature map must be C x H x W, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise ValidationError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def flat(self) -> np.ndarray:
        """``C x N`` view with vertices in row-major order."""
        return self.data.reshape(self.channels, -1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, height: int, width: int) -> "FeatureMap":
        flat = np.asarray(flat)
        if flat.ndim == 1:
            flat = flat[None]
        if flat.shape[1] != height * width:
            raise DimensionError(
                f"{flat.shape[1]} vertices cannot fill a {height}x{width} grid"
            )
        return cls(flat.reshape(flat.shape[0], height, width))


@dataclass(frozen=True)
class PlanarGraph:
    height: int
    width: int
    edges: np.ndarray  # (E, 2) int64, u < v
    weights: np.ndarray | None = field(default=None)

    @property
    def vertex_count(self) -> int:
        return self.height * self.width

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def with_weights(self, weights) -> "PlanarGraph":
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.edge_count,):
            raise DimensionError(
                f"expected {self.edge_count} edge weights, got shape {weights.shape}"
            )
        if not np.all(np.isfinite(weights)):
            raise ValidationError("edge weights must be finite")
        if np.any(weights < 0):
            raise ValidationError("edge weights must be non-negative")
        return PlanarGraph(self.height, self.width, self.edges, weights)


@lru_cache(maxsize=32)
def _grid_edges(height: int, width: int) -> np.ndarray:
    ids = np.arange(height * width, dtype=np.int64).reshape(height, width)
    horizontal = np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1)
    vertical = np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1)
    edges = np.concatenate([horizontal, vertical]).astype(np.int64)
    edges.setflags(write=False)
    return edges


def build_planar_graph(height: int, width: int) -> PlanarGraph:
    """Unweighted 4-connected grid over ``height x width`` vertices."""
    height, width = int(height), int(width)
    if height < 1 or width < 1 or height * width < 2:
        raise SizingError(f"grid {height}x{width} has fewer than two vertices")
    return PlanarGraph(height, width, _grid_edges(height, width))


def edge_distances(flat: np.ndarray, edges: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """``scale * ||flat[:, u] - flat[:, v]||_2`` for each ``(u, v)`` row of ``edges``."""
    diff = flat[:, edges[:, 0]] - flat[:, edges[:, 1]]
    return scale * np.sqrt(np.einsum("ce,ce->e", diff, diff))


def pairwise_dissimilarity(
    embedding: FeatureMap, graph: PlanarGraph, scale: float = 1.0
) -> PlanarGraph:
    """Populate ``graph`` with scaled Euclidean distances between embedding vectors."""
    if not isinstance(embedding, FeatureMap):
        embedding = FeatureMap(embedding)
    if (embedding.height, embedding.width) != (graph.height, graph.width):
        raise DimensionError(
            f"embedding is {embedding.height}x{embedding.width}, "
            f"graph is {graph.height}x{graph.width}"
        )
    if not (np.isfinite(scale) and scale > 0):
        raise ValidationError(f"scale must be a positive finite number, got {scale}")
    flat = embedding.flat().astype(np.float64, copy=False)
    return graph.with_weights(edge_distances(flat, graph.edges, scale))
