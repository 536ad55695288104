"""Stochastic block model graphs with class-dependent Gaussian features."""

from __future__ import annotations

import numpy as np

from labelmia.errors import ArgumentError
from labelmia.graph import Graph


def generate_sbm(num_nodes, num_classes, intra_edge_prob, inter_edge_prob, feature_dim,
                 feature_signal, seed, noise_std=0.15, base_level=0.3):
    """Sample an attributed SBM graph.

    Node ``i`` belongs to class ``i % num_classes``. Each unordered pair is
    linked independently with ``intra_edge_prob`` (same class) or
    ``inter_edge_prob``. Feature dimension ``j`` is assigned to class
    ``j % num_classes``; a node's features are Gaussian with std
    ``noise_std`` around ``base_level``, raised by
    ``feature_signal * noise_std`` on its own class's dimensions, then
    clipped to [0, 1] and stored as float32.
    """
    if num_classes < 2:
        raise ArgumentError("num_classes must be >= 2")
    if not 0.0 <= inter_edge_prob <= intra_edge_prob <= 1.0:
        raise ArgumentError("need 0 <= inter_edge_prob <= intra_edge_prob <= 1")
    if num_nodes < 1 or feature_dim < 1:
        raise ArgumentError("num_nodes and feature_dim must be positive")
    if noise_std < 0:
        raise ArgumentError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    labels = np.arange(num_nodes) % num_classes

    src, dst = [], []
    for i in range(num_nodes - 1):
        others = np.arange(i + 1, num_nodes)
        p = np.where(labels[others] == labels[i], intra_edge_prob, inter_edge_prob)
        hit = others[rng.random(len(others)) < p]
        src.append(np.full(len(hit), i))
        dst.append(hit)
    edges = np.column_stack([np.concatenate(src or [[]]), np.concatenate(dst or [[]])])

    owner = np.arange(feature_dim) % num_classes
    means = np.full((num_classes, feature_dim), base_level)
    means[owner, np.arange(feature_dim)] += feature_signal * noise_std
    features = means[labels] + noise_std * rng.standard_normal((num_nodes, feature_dim))
    features = np.clip(features, 0.0, 1.0).astype(np.float32)
    return Graph.from_edges(features, labels, edges.astype(np.int64), num_classes=num_classes)


def homophily(graph: Graph) -> float:
    """Fraction of undirected edges joining same-class endpoints."""
    src, dst = graph.edge_index()
    if len(src) == 0:
        return float("nan")
    return float(np.mean(graph.labels[src] == graph.labels[dst]))
