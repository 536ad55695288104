"""Probability-based baseline attack features.

These need posterior vectors and therefore a :class:`PosteriorOracle`;
they exist for comparison with the label-only attack.
"""

from __future__ import annotations

import numpy as np

from labelmia.errors import ArgumentError
from labelmia.graph import Graph, PosteriorOracle, induced_subgraph, khop_neighbors

VARIANTS = ("hop0", "hop2", "combined", "all_prob")


def baseline_width(variant: str, num_classes: int) -> int:
    return {"hop0": 2, "hop2": 2, "combined": 4, "all_prob": num_classes}[variant]


def _top2(p):
    return -np.sort(-p, axis=1)[:, :2]


def _hop0(oracle, graph, nodes):
    payloads = [Graph.from_edges(graph.features[[v]], graph.labels[[v]], np.zeros((0, 2)),
                                 graph.num_classes) for v in nodes]
    probs = oracle.query_batch(payloads)
    return _top2(np.vstack(probs))


def _hop2(oracle, graph, nodes):
    payloads, rows = [], []
    for v in nodes:
        hood = np.append(khop_neighbors(graph, v, 2), v)
        sub, mapping = induced_subgraph(graph, hood)
        payloads.append(sub)
        rows.append(mapping[int(v)])
    probs = oracle.query_batch(payloads)
    return _top2(np.vstack([p[r] for p, r in zip(probs, rows)]))


def baseline_matrix(oracle: PosteriorOracle, graph_view: Graph, nodes, variant: str) -> np.ndarray:
    """Baseline features for several nodes, one row per node.

    ``hop0``
        top-2 posterior values of the node queried alone.
    ``hop2``
        top-2 values when the node is queried with its 2-hop induced subgraph.
    ``combined``
        ``hop0`` followed by ``hop2``.
    ``all_prob``
        the node's full posterior when all of ``graph_view`` is sent at once.
    """
    if not isinstance(oracle, PosteriorOracle):
        raise TypeError("baseline features require a PosteriorOracle")
    if variant not in VARIANTS:
        raise ArgumentError(f"variant must be one of {VARIANTS}, got {variant!r}")
    nodes = [int(v) for v in nodes]
    if not nodes:
        return np.zeros((0, baseline_width(variant, graph_view.num_classes)))
    if variant == "hop0":
        return _hop0(oracle, graph_view, nodes)
    if variant == "hop2":
        return _hop2(oracle, graph_view, nodes)
    if variant == "combined":
        return np.hstack([_hop0(oracle, graph_view, nodes), _hop2(oracle, graph_view, nodes)])
    return oracle.query(graph_view)[nodes]


def baseline_features(oracle: PosteriorOracle, graph_view: Graph, node: int, variant: str) -> np.ndarray:
    return baseline_matrix(oracle, graph_view, [node], variant)[0]
