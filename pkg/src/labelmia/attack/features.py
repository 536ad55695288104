"""Label-only attack features from perturbed 0-hop and 1-hop queries.

For every rate ``r`` and direction ``v`` (feature-space max or min) a
fresh random subset of ``ceil(r * feature_dim)`` feature positions of the
target node is overwritten with the extreme value. The masked row is sent

* alone (0-hop),
* with its true neighbors over all star edges, and
* with the same neighbors while star edges are removed one at a time in a
  random order, re-querying after each removal.

Only predicted labels are observed; they are compared with the known
ground truth of the target and of its neighbors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from labelmia.errors import ArgumentError
from labelmia.graph import Graph, LabelOracle, SubgraphQuery
from labelmia.validation import check_node_set, check_rate_set

SCHEMA_VERSION = "labelmia-features/1"
DEFAULT_RATE_SET = (0.2, 0.4, 0.6, 0.8, 1.0)
DIRECTIONS = ("max", "min")
FIXED_FIELDS = ("n_num", "w_i_node", "o_label")
PER_RATE_FIELDS = ("i_none", "i_all", "i_step", "n_acc_all", "n_acc_none", "n_acc_avg",
                   "change_p")


def feature_names(rate_set=DEFAULT_RATE_SET) -> list[str]:
    names = list(FIXED_FIELDS)
    for r in check_rate_set(rate_set):
        for v in DIRECTIONS:
            names.extend(f"{f}_{v}_{r}" for f in PER_RATE_FIELDS)
    return names


def queries_per_node(n_num: int, rate_set=DEFAULT_RATE_SET) -> int:
    return 2 * len(rate_set) * (2 + n_num)


@dataclass(frozen=True)
class AttackFeatureVector:
    values: np.ndarray
    rate_set: tuple

    @property
    def names(self):
        return feature_names(self.rate_set)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True)
class AttackRecord:
    node: int
    features: AttackFeatureVector
    membership: int


def _mask_size(rate, dim):
    # tolerate products like 0.6 * 5 = 3.0000000000000004
    return min(dim, max(1, math.ceil(rate * dim - 1e-9)))


def _star_edges(targets):
    targets = np.asarray(targets, dtype=np.int64)
    return np.column_stack([np.zeros(len(targets), dtype=np.int64), targets + 1])


def extract_attack_features(oracle: LabelOracle, graph: Graph, node: int, ground_truth: int,
                            neighbor_truths, rate_set=DEFAULT_RATE_SET, extrema=(0.0, 1.0),
                            seed=0) -> AttackFeatureVector:
    """Query ``oracle`` about ``node`` and summarize the answers.

    Issues exactly ``2 * len(rate_set) * (2 + n_num)`` label queries.
    ``neighbor_truths`` follows the ascending order of ``node``'s neighbors
    in ``graph``.
    """
    if not isinstance(oracle, LabelOracle):
        raise TypeError("label-only features require a LabelOracle")
    rates = check_rate_set(rate_set)
    neigh = graph.neighbors(node)
    k = len(neigh)
    neighbor_truths = np.asarray(neighbor_truths, dtype=np.int64).reshape(-1)
    if len(neighbor_truths) != k:
        raise ArgumentError(f"node {node} has {k} neighbors but {len(neighbor_truths)} truths")
    lo, hi = extrema
    x = graph.features[node]
    d = x.shape[0]
    neigh_x = graph.features[neigh]
    all_edges = _star_edges(np.arange(k))
    empty = np.zeros((0, d), dtype=x.dtype)

    queries, change = [], []
    for ri, r in enumerate(rates):
        for vi, v in enumerate(DIRECTIONS):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), ri, vi]))
            pos = rng.choice(d, size=_mask_size(r, d), replace=False)
            masked = x.copy()
            masked[pos] = hi if v == "max" else lo
            change.append(np.count_nonzero(masked[pos] != x[pos]) / d)
            drop_order = rng.permutation(k)
            queries.append(SubgraphQuery(masked, empty))
            queries.append(SubgraphQuery(masked, neigh_x, all_edges))
            for s in range(1, k + 1):
                queries.append(SubgraphQuery(masked, neigh_x, _star_edges(np.sort(drop_order[s:]))))
    answers = oracle.query_batch(queries)

    per = 2 + k
    values = [float(k), float(k == 0), float(ground_truth)]
    for block, change_p in enumerate(change):
        ans = answers[block * per:(block + 1) * per]
        i_none = float(ans[0][0] == ground_truth)
        i_all = float(ans[1][0] == ground_truth)
        if k == 0:
            i_step, n_all, n_none, n_avg = i_all, 0.0, 0.0, 0.0
        else:
            n_all = float(np.mean(ans[1][1:] == neighbor_truths))
            steps = ans[2:]
            i_step = float(np.mean([a[0] == ground_truth for a in steps]))
            accs = [np.mean(a[1:] == neighbor_truths) for a in steps]
            n_avg = float(np.mean(accs))
            n_none = float(accs[-1])
        values.extend([i_none, i_all, i_step, n_all, n_none, n_avg, change_p])
    return AttackFeatureVector(np.asarray(values, dtype=np.float64), rates)


def node_seed(seed: int, node: int) -> int:
    """Per-node extraction seed, independent of iteration order."""
    return int(np.random.SeedSequence([int(seed), int(node)]).generate_state(1)[0])


def build_attack_dataset(oracle: LabelOracle, graph_view: Graph, member_nodes, nonmember_nodes,
                         truths=None, rate_set=DEFAULT_RATE_SET, extrema=(0.0, 1.0),
                         seed=0) -> list[AttackRecord]:
    """Attack records for members (label 1) followed by non-members (label 0)."""
    members = check_node_set(member_nodes, graph_view.num_nodes, "member_nodes")
    nonmembers = check_node_set(nonmember_nodes, graph_view.num_nodes, "nonmember_nodes")
    if np.intersect1d(members, nonmembers).size:
        raise ArgumentError("member and non-member node sets overlap")
    truths = graph_view.labels if truths is None else np.asarray(truths, dtype=np.int64)
    records = []
    for nodes, label in ((members, 1), (nonmembers, 0)):
        for v in nodes:
            v = int(v)
            fv = extract_attack_features(oracle, graph_view, v, int(truths[v]),
                                         truths[graph_view.neighbors(v)], rate_set, extrema,
                                         node_seed(seed, v))
            records.append(AttackRecord(v, fv, label))
    return records


def records_to_arrays(records):
    """Stack records into ``(X, y, node_ids)``."""
    if not records:
        raise ArgumentError("no attack records")
    X = np.vstack([r.features.values for r in records])
    y = np.asarray([r.membership for r in records], dtype=np.int64)
    nodes = np.asarray([r.node for r in records], dtype=np.int64)
    return X, y, nodes
