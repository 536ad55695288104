import numpy as np
import pytest
from metric_fixtures import FIXTURES, expected_metrics, pair_auc, random_instance

from labelmia import ArgumentError
from labelmia.evaluation import (MetricsReport, aggregate_repetitions, compute_metrics, fmt,
                                 permutation_importance, roc_auc, tpr_at_fpr)


def test_perfect_separation():
    m = compute_metrics([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
    assert (m.auc, m.accuracy, m.f1) == (1.0, 1.0, 1.0)
    assert (m.n_positive, m.n_negative, m.fpr_target) == (2, 2, 0.1)


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]) == 0.75
    assert roc_auc([0.4] * 6, [1, 0] * 3) == 0.5


@pytest.mark.parametrize("seed", range(100))
def test_auc_matches_pair_oracle(seed):
    scores, labels = random_instance(seed)
    assert abs(roc_auc(scores, labels) - pair_auc(scores, labels)) <= 1e-12


@pytest.mark.parametrize("scores,labels,counts", FIXTURES)
def test_confusion_fixtures(scores, labels, counts):
    m = compute_metrics(scores, labels)
    got = {k: getattr(m, k) for k in ("accuracy", "precision", "recall", "f1")}
    assert got == expected_metrics(counts)


def test_zero_division_conventions():
    m = compute_metrics([0.1, 0.2, 0.3], [1, 0, 1])
    assert m.precision == 0.0 and m.f1 == 0.0 and m.recall == 0.0


def test_errors():
    with pytest.raises(ArgumentError):
        compute_metrics([0.1, 0.2], [1, 1])
    with pytest.raises(ArgumentError):
        compute_metrics([0.1, 0.2], [1, 0, 1])
    with pytest.raises(ArgumentError):
        compute_metrics([0.1, 0.2], [1, 2])


@pytest.mark.parametrize("seed", range(10))
def test_auc_invariant_to_monotone_maps(seed):
    scores, labels = random_instance(seed)
    base = roc_auc(scores, labels)
    assert roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert roc_auc(3.0 * scores - 7.0, labels) == pytest.approx(base, abs=1e-12)
    flipped = compute_metrics(1 - scores, 1 - labels)
    assert flipped.auc == pytest.approx(compute_metrics(scores, labels).auc, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_tpr_at_fpr_monotone(seed):
    scores, labels = random_instance(seed)
    values = [tpr_at_fpr(scores, labels, t) for t in np.linspace(0, 1, 21)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] == 1.0


def test_tpr_at_fpr_step_function():
    scores = [0.9, 0.8, 0.7, 0.6, 0.5]
    labels = [1, 0, 1, 0, 0]
    assert tpr_at_fpr(scores, labels, 0.0) == 0.5
    assert tpr_at_fpr(scores, labels, 1 / 3) == 1.0
    # a tied run cannot be split
    assert tpr_at_fpr([0.9, 0.9], [1, 0], 0.5) == 0.0


def _report(acc, fpr_target=0.1):
    return MetricsReport(acc, 0.5, 0.5, 0.5, 0.5, 0.2, fpr_target, 5, 5)


def test_aggregate_examples():
    one = aggregate_repetitions([_report(0.7)])
    assert one["mean"]["accuracy"] == 0.7 and one["std"]["accuracy"] == 0.0
    two = aggregate_repetitions([_report(0.6), _report(0.62)])
    assert two["mean"]["accuracy"] == pytest.approx(0.61)
    assert two["std"]["accuracy"] == pytest.approx(0.01414, abs=1e-5)
    ten = aggregate_repetitions([_report(0.55)] * 10)
    assert all(v == 0.0 for v in ten["std"].values())
    assert ten["n"] == 10
    with pytest.raises(ArgumentError):
        aggregate_repetitions([_report(0.6), _report(0.6, 0.01)])
    with pytest.raises(ArgumentError):
        aggregate_repetitions([])


class ColumnModel:
    def __init__(self, j):
        self.j = j

    def predict_proba(self, X):
        p = np.clip(X[:, self.j], 0, 1)
        return np.column_stack([1 - p, p])


def test_permutation_importance_examples():
    rng = np.random.default_rng(0)
    y = rng.permutation(np.repeat([0, 1], 500))
    X = np.column_stack([y, np.full(1000, 0.3), rng.random(1000)])
    result = permutation_importance(ColumnModel(0), X, y, repeats=5, seed=1, names=["lab", "const", "noise"])
    assert len(result) == 3 and {n for n, _ in result} == {"lab", "const", "noise"}
    imp = dict(result)
    assert result[0][0] == "lab"
    assert imp["lab"] == pytest.approx(1.0 - 0.5, abs=0.05)
    assert abs(imp["const"]) <= 0.02
    with pytest.raises(ArgumentError):
        permutation_importance(ColumnModel(0), X, y, repeats=0)


def test_report_round_trip_and_fmt():
    m = compute_metrics([0.9, 0.2], [1, 0], seed=3, config_fingerprint="abc")
    assert MetricsReport.from_dict(m.to_dict()) == m
    assert fmt(0.1) == "0.1" and fmt(float("nan")) == "nan" and fmt(3) == "3"
