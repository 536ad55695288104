"""Graph container, neighborhood queries and the oracle wrappers.

The oracles encode the threat model: a :class:`LabelOracle` answers a
:class:`SubgraphQuery` with one class index per payload node and nothing
else, while a :class:`PosteriorOracle` returns probability rows and exists
only for the probability-based baselines.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from labelmia.errors import ArgumentError


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Graph:
    """Immutable attributed graph with undirected CSR adjacency.

    Parameters
    ----------
    features : array of shape (num_nodes, feature_dim)
    labels : int array of shape (num_nodes,)
    indptr, indices : CSR adjacency. Every neighbor list must be sorted,
        duplicate free, symmetric and without self-loops.
    num_classes : int, optional
        Defaults to ``labels.max() + 1``.

    Use :meth:`from_edges` to build a graph from a raw edge list.
    """

    def __init__(self, features, labels, indptr, indices, num_classes=None):
        features = np.asarray(features)
        if features.ndim != 2:
            raise ArgumentError("features must be a 2-d array")
        labels = np.asarray(labels, dtype=np.int64)
        n = features.shape[0]
        if labels.shape != (n,):
            raise ArgumentError(f"expected {n} labels, got shape {labels.shape}")
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ArgumentError("malformed CSR indptr")
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if n else 0
        if n and (labels.min() < 0 or labels.max() >= num_classes):
            raise ArgumentError(f"labels must lie in [0, {num_classes})")
        _check_adjacency(n, indptr, indices)
        self.features = _readonly(features)
        self.labels = _readonly(labels)
        self.indptr = _readonly(indptr)
        self.indices = _readonly(indices)
        self.num_classes = int(num_classes)

    @classmethod
    def from_edges(cls, features, labels, edges, num_classes=None):
        """Build a graph from an edge list, symmetrizing and deduplicating.

        Self-loops in ``edges`` are dropped.
        """
        features = np.asarray(features)
        n = features.shape[0]
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise ArgumentError(f"edge endpoint out of range [0, {n})")
        edges = edges[edges[:, 0] != edges[:, 1]]
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        adj = sp.csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))
        adj.sum_duplicates()
        adj.sort_indices()
        return cls(features, labels, adj.indptr, adj.indices, num_classes)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    def degree(self, node=None):
        deg = np.diff(self.indptr)
        return deg if node is None else int(deg[node])

    def neighbors(self, node: int) -> np.ndarray:
        _check_node(self, node)
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def edge_index(self) -> np.ndarray:
        """Undirected edges as a (2, num_edges) array with src < dst."""
        src = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        keep = src < self.indices
        return np.vstack([src[keep], self.indices[keep]])

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.num_nodes, self.num_nodes))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    __hash__ = None

    def __repr__(self):
        return (f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, "
                f"feature_dim={self.feature_dim}, num_classes={self.num_classes})")


def _check_adjacency(n, indptr, indices):
    if len(indices) == 0:
        return
    if indices.min() < 0 or indices.max() >= n:
        raise ArgumentError("neighbor index out of range")
    rows = np.repeat(np.arange(n), np.diff(indptr))
    if np.any(rows == indices):
        raise ArgumentError("self-loops must not be stored")
    # sorted and duplicate-free within each row
    step = np.diff(indices)
    same_row = np.diff(rows) == 0
    if np.any(step[same_row] <= 0):
        raise ArgumentError("neighbor lists must be sorted and duplicate-free")
    fwd = rows * n + indices
    bwd = np.sort(indices * n + rows)
    if not np.array_equal(fwd, bwd):
        raise ArgumentError("adjacency must be symmetric")


def _check_node(graph, node):
    if not 0 <= int(node) < graph.num_nodes:
        raise ArgumentError(f"node {node} out of range [0, {graph.num_nodes})")


def khop_neighbors(graph: Graph, node: int, l: int) -> np.ndarray:
    """Nodes at shortest-path distance 1..l from ``node``, ascending."""
    _check_node(graph, node)
    if l < 1:
        raise ArgumentError("hop count must be >= 1")
    seen = np.zeros(graph.num_nodes, dtype=bool)
    seen[node] = True
    frontier = np.array([node], dtype=np.int64)
    for _ in range(l):
        if len(frontier) == 0:
            break
        nxt = np.concatenate([graph.indices[graph.indptr[u]:graph.indptr[u + 1]]
                              for u in frontier])
        nxt = np.unique(nxt)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    seen[node] = False
    return np.flatnonzero(seen)


def induced_subgraph(graph: Graph, nodes: Iterable[int]):
    """Subgraph on ``nodes`` keeping edges whose endpoints are both retained.

    Returns ``(subgraph, mapping)`` where ``mapping`` sends old node ids to
    new ones. New ids follow ascending old-id order.
    """
    nodes = np.unique(np.fromiter((int(v) for v in nodes), dtype=np.int64))
    if len(nodes) == 0:
        raise ArgumentError("node set must be non-empty")
    if nodes[0] < 0 or nodes[-1] >= graph.num_nodes:
        raise ArgumentError("node set contains out-of-range indices")
    sub = graph.adjacency()[nodes][:, nodes].tocsr()
    sub.sort_indices()
    g = Graph(graph.features[nodes], graph.labels[nodes], sub.indptr, sub.indices,
              graph.num_classes)
    mapping = {int(old): new for new, old in enumerate(nodes)}
    return g, mapping


@dataclass(frozen=True)
class SubgraphQuery:
    """Payload an adversary sends to a model.

    Local node order is ``[center, neighbor_0, neighbor_1, ...]``. Edges are
    (center, neighbor) pairs only; lateral neighbor edges are never sent.
    """

    center_features: np.ndarray
    neighbor_features: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        center = np.asarray(self.center_features)
        if center.ndim != 1:
            raise ArgumentError("center_features must be a single row")
        neigh = np.asarray(self.neighbor_features, dtype=center.dtype)
        if neigh.size == 0:
            neigh = neigh.reshape(0, center.shape[0])
        if neigh.ndim != 2 or neigh.shape[1] != center.shape[0]:
            raise ArgumentError("neighbor rows must match the center dimensionality")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        k = neigh.shape[0]
        if len(edges):
            lo, hi = edges.min(axis=1), edges.max(axis=1)
            if np.any(lo != 0) or np.any(hi < 1) or np.any(hi > k):
                raise ArgumentError("query edges must join the center to a neighbor")
        object.__setattr__(self, "center_features", center)
        object.__setattr__(self, "neighbor_features", neigh)
        object.__setattr__(self, "edges", edges)

    @property
    def node_count(self) -> int:
        return 1 + self.neighbor_features.shape[0]

    def stacked_features(self) -> np.ndarray:
        return np.vstack([self.center_features[None, :], self.neighbor_features])

    def with_edges(self, edges) -> "SubgraphQuery":
        return SubgraphQuery(self.center_features, self.neighbor_features, edges)


def build_1hop_query(graph: Graph, node: int, center_features_override=None) -> SubgraphQuery:
    """Star query around ``node`` with its 1-hop neighbors in ascending order."""
    _check_node(graph, node)
    center = graph.features[node]
    if center_features_override is not None:
        center = np.asarray(center_features_override)
        if center.shape != (graph.feature_dim,):
            raise ArgumentError(
                f"override row has shape {center.shape}, expected ({graph.feature_dim},)")
    neigh = graph.neighbors(node)
    k = len(neigh)
    edges = np.column_stack([np.zeros(k, dtype=np.int64), np.arange(1, k + 1)])
    return SubgraphQuery(center, graph.features[neigh], edges)


def _union(payloads: Sequence[tuple[np.ndarray, np.ndarray]]):
    """Disjoint union of (features, edges[E, 2]) payloads."""
    feats, edges, sizes = [], [], []
    offset = 0
    for x, e in payloads:
        feats.append(x)
        edges.append(e + offset)
        sizes.append(x.shape[0])
        offset += x.shape[0]
    x = np.vstack(feats)
    e = np.vstack(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    return x, e.T.astype(np.int64, copy=False), np.cumsum(sizes)[:-1]


def _payload(item):
    if isinstance(item, SubgraphQuery):
        return item.stacked_features(), item.edges
    if isinstance(item, Graph):
        return item.features, item.edge_index().T
    raise TypeError(f"cannot query with {type(item).__name__}")


class _Oracle:
    # ``model`` needs a ``logits(features, edge_index)`` method where
    # edge_index lists each undirected edge once as a (2, E) array.

    def __init__(self, model):
        self._model = model
        self._lock = threading.Lock()
        self._count = 0

    @property
    def query_count(self) -> int:
        return self._count

    def _bump(self, k):
        with self._lock:
            self._count += k

    def _logits_batch(self, items):
        x, edge_index, cuts = _union([_payload(q) for q in items])
        logits = self._model.logits(x, edge_index)
        return np.split(logits, cuts)


class LabelOracle(_Oracle):
    """Label-only view of a trained model.

    Every call answers with class indices (argmax, lowest index on ties)
    and increments :attr:`query_count` once per payload.
    """

    def query(self, query: SubgraphQuery) -> np.ndarray:
        return self.query_batch([query])[0]

    def query_batch(self, queries: Sequence[SubgraphQuery]) -> list[np.ndarray]:
        """Answer several independent queries; counts as ``len(queries)`` calls."""
        for q in queries:
            if not isinstance(q, SubgraphQuery):
                raise TypeError("a label oracle only accepts SubgraphQuery payloads")
        if not queries:
            return []
        self._bump(len(queries))
        return [np.argmax(z, axis=1) for z in self._logits_batch(queries)]


class PosteriorOracle(_Oracle):
    """Probability view of a trained model, for probability-based baselines.

    Accepts star queries or arbitrary :class:`Graph` payloads.
    """

    def query(self, payload) -> np.ndarray:
        return self.query_batch([payload])[0]

    def query_batch(self, payloads) -> list[np.ndarray]:
        if not payloads:
            return []
        self._bump(len(payloads))
        return [softmax_rows(z) for z in self._logits_batch(payloads)]


def softmax_rows(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
