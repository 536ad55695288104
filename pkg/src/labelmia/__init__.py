"""Label-only membership inference against node-level graph neural networks."""

from labelmia.errors import ArgumentError, ConfigError, FormatError, NumericError
from labelmia.graph import (
    Graph,
    LabelOracle,
    PosteriorOracle,
    SubgraphQuery,
    build_1hop_query,
    induced_subgraph,
    khop_neighbors,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ConfigError",
    "FormatError",
    "Graph",
    "LabelOracle",
    "NumericError",
    "PosteriorOracle",
    "SubgraphQuery",
    "build_1hop_query",
    "induced_subgraph",
    "khop_neighbors",
]
