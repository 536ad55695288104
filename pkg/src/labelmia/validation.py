"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numpy as np

from labelmia.errors import ArgumentError
from labelmia.graph import Graph


def check_graph(graph) -> Graph:
    if not isinstance(graph, Graph):
        raise ArgumentError(f"expected a Graph, got {type(graph).__name__}")
    if graph.num_nodes == 0:
        raise ArgumentError("graph has no nodes")
    return graph


def check_node_set(nodes, num_nodes, name="nodes") -> np.ndarray:
    arr = np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes, dtype=np.int64)
    arr = arr.reshape(-1)
    if len(arr) and (arr.min() < 0 or arr.max() >= num_nodes):
        raise ArgumentError(f"{name} contains indices outside [0, {num_nodes})")
    if len(np.unique(arr)) != len(arr):
        raise ArgumentError(f"{name} contains duplicates")
    return arr


def check_rate_set(rates) -> tuple:
    rates = tuple(float(r) for r in rates)
    if not rates:
        raise ArgumentError("rate set must be non-empty")
    if any(not 0.0 < r <= 1.0 for r in rates):
        raise ArgumentError("rates must lie in (0, 1]")
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ArgumentError("rates must be strictly ascending")
    return rates


def check_binary_labels(labels, name="labels") -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ArgumentError(f"{name} must be one-dimensional")
    if not np.isin(y, (0, 1)).all():
        raise ArgumentError(f"{name} must be 0/1")
    return y.astype(np.int64)


def check_both_classes(y, name="labels"):
    if len(np.unique(y)) < 2:
        raise ArgumentError(f"{name} must contain both classes")
