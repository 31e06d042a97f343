"""Differentiable edge-aware filtering over minimum spanning trees."""

from .errors import (
    ConnectivityError,
    DimensionError,
    GroupingError,
    ParseError,
    SizingError,
    StateError,
    StructureError,
    TreeFilterError,
    ValidationError,
)
from .grid_graph import FeatureMap, PlanarGraph, build_planar_graph, pairwise_dissimilarity
from .spanning_tree import (
    SpanningTree,
    boruvka_mst,
    kruskal_mst_oracle,
    minimum_spanning_tree,
    root_tree,
    sample_root,
    tree_from_edges,
)
from .tree_filter import (
    FilterCache,
    Gradients,
    WorkCounter,
    affinity_map,
    aggregate,
    backward,
    forward,
    grouped_filter,
    propagate,
)

__version__ = "0.1.0"
