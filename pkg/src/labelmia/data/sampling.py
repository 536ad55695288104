"""Target/shadow train/test node sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from labelmia.errors import ArgumentError, FormatError
from labelmia.graph import Graph

METHODS = ("random", "balanced", "partially_balanced")
SET_NAMES = ("target_train", "target_test", "shadow_train", "shadow_test")
PARTIAL_TRAIN_FRACTION = 0.45


@dataclass(frozen=True)
class DatasetSplit:
    target_train: np.ndarray
    target_test: np.ndarray
    shadow_train: np.ndarray
    shadow_test: np.ndarray
    sampling_method: str
    seed: int

    def sets(self):
        return [getattr(self, k) for k in SET_NAMES]

    def to_dict(self):
        d = {k: [int(v) for v in getattr(self, k)] for k in SET_NAMES}
        d["sampling_method"] = self.sampling_method
        d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d, source=None):
        try:
            return cls(*(np.asarray(d[k], dtype=np.int64) for k in SET_NAMES),
                       sampling_method=d["sampling_method"], seed=int(d["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed split: {exc}", source) from exc

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def feature_extrema(graph: Graph):
    """Global scalar (min, max) over the whole feature matrix."""
    return float(graph.features.min()), float(graph.features.max())


def _class_pools(labels, num_classes, rng):
    return [rng.permutation(np.flatnonzero(labels == c)) for c in range(num_classes)]


def sample_split(graph: Graph, method="balanced", sizes=None, seed=0) -> DatasetSplit:
    """Draw four disjoint node sets.

    ``random``
        Shuffle every node and cut into four parts whose sizes differ by at
        most one. ``sizes`` (four totals) may shrink them.
    ``balanced``
        ``m = min_class_count // 4`` nodes of each class in every set.
        ``sizes`` gives four equal totals, each a multiple of the class count.
    ``partially_balanced``
        Class-balanced train sets with ``floor(0.45 * min_class_count)`` per
        class (capped so the tests fit), and uniformly drawn test sets of
        the same total size. ``sizes`` overrides the four totals; the two
        train totals must be equal multiples of the class count.
    """
    if method not in METHODS:
        raise ArgumentError(f"sampling method must be one of {METHODS}, got {method!r}")
    rng = np.random.default_rng(seed)
    n, k = graph.num_nodes, graph.num_classes
    labels = graph.labels
    counts = np.bincount(labels, minlength=k)
    if sizes is not None:
        sizes = [int(s) for s in sizes]
        if len(sizes) != 4 or min(sizes) < 1:
            raise ArgumentError("sizes must be four positive totals")

    if method == "random":
        order = rng.permutation(n)
        if sizes is None:
            parts = np.array_split(order, 4)
        else:
            if sum(sizes) > n:
                raise ArgumentError(f"requested {sum(sizes)} nodes but the graph has {n}")
            parts = np.split(order[:sum(sizes)], np.cumsum(sizes)[:-1])
        return DatasetSplit(*(np.sort(p) for p in parts), sampling_method=method, seed=seed)

    pools = _class_pools(labels, k, rng)
    limiting = int(np.argmin(counts))

    if method == "balanced":
        if sizes is None:
            m = int(counts.min()) // 4
        else:
            if len(set(sizes)) != 1 or sizes[0] % k:
                raise ArgumentError(
                    f"balanced sizes must be four equal multiples of {k} classes")
            m = sizes[0] // k
        if m < 1 or 4 * m > counts.min():
            raise ArgumentError(
                f"class {limiting} has {counts[limiting]} nodes; cannot place {m} per class "
                "in each of 4 sets")
        parts = [np.concatenate([pool[i * m:(i + 1) * m] for pool in pools]) for i in range(4)]
        return DatasetSplit(*(np.sort(p) for p in parts), sampling_method=method, seed=seed)

    # partially balanced
    if sizes is None:
        m = int(np.floor(counts.min() * PARTIAL_TRAIN_FRACTION))
        m = min(m, n // (4 * k))
        test_sizes = (m * k, m * k)
    else:
        if sizes[0] != sizes[2] or sizes[0] % k:
            raise ArgumentError(
                f"partially balanced train sizes must be equal multiples of {k} classes")
        m = sizes[0] // k
        test_sizes = (sizes[1], sizes[3])
    if m < 1 or 2 * m > counts.min():
        raise ArgumentError(
            f"class {limiting} has {counts[limiting]} nodes; cannot place {m} per class "
            "in both train sets")
    train_t = np.concatenate([pool[:m] for pool in pools])
    train_s = np.concatenate([pool[m:2 * m] for pool in pools])
    rest = rng.permutation(np.concatenate([pool[2 * m:] for pool in pools]))
    if sum(test_sizes) > len(rest):
        raise ArgumentError(
            f"only {len(rest)} nodes remain for test sets of sizes {test_sizes}")
    test_t = rest[:test_sizes[0]]
    test_s = rest[test_sizes[0]:sum(test_sizes)]
    return DatasetSplit(np.sort(train_t), np.sort(test_t), np.sort(train_s), np.sort(test_s),
                        sampling_method=method, seed=seed)
