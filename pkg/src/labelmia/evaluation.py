"""Attack metrics, repetition aggregation and permutation importance."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from labelmia.errors import ArgumentError
from labelmia.validation import check_binary_labels

METRIC_NAMES = ("accuracy", "precision", "recall", "auc", "f1", "tpr_at_fpr")
# Column order of the aggregate CSV.
TABLE_COLUMNS = ("dataset", "gnn", "test_acc", "train_acc", "acc", "pre", "rec", "auc", "f1",
                 "tpr_at_fpr")


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    auc: float
    f1: float
    tpr_at_fpr: float
    fpr_target: float
    n_positive: int
    n_negative: int
    seed: int | None = None
    config_fingerprint: str = ""

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def tpr_at_fpr(scores, labels, fpr_target) -> float:
    """Highest TPR among thresholds whose FPR does not exceed ``fpr_target``.

    Thresholds are the observed scores (predict positive when
    ``score >= t``); no interpolation between ROC points.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y == 1)
    fp = np.cumsum(y == 0)
    # only the last index of each run of equal scores is a reachable cut
    last = np.append(s[1:] != s[:-1], True)
    tpr = tp[last] / max(tp[-1], 1)
    fpr = fp[last] / max(fp[-1], 1)
    ok = fpr <= fpr_target + 1e-12
    return float(tpr[ok].max()) if ok.any() else 0.0


def compute_metrics(scores, labels, threshold=0.5, fpr_target=0.1, seed=None,
                    config_fingerprint="") -> MetricsReport:
    """Threshold metrics, AUC and TPR at a fixed FPR.

    Precision and F1 are 0 when nothing is predicted positive.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = check_binary_labels(np.asarray(labels).reshape(-1))
    if scores.shape != labels.shape:
        raise ArgumentError(f"{len(scores)} scores but {len(labels)} labels")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ArgumentError("metrics need both member and non-member labels")
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    tn = int(np.sum(~pred & (labels == 0)))
    fn = n_pos - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / n_pos
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return MetricsReport(
        accuracy=(tp + tn) / len(labels), precision=precision, recall=recall,
        auc=roc_auc(scores, labels), f1=f1, tpr_at_fpr=tpr_at_fpr(scores, labels, fpr_target),
        fpr_target=float(fpr_target), n_positive=n_pos, n_negative=n_neg, seed=seed,
        config_fingerprint=config_fingerprint)


def aggregate_repetitions(reports) -> dict:
    """Mean and sample standard deviation (n - 1) of every metric.

    Returns ``{"n": int, "fpr_target": float, "mean": {...}, "std": {...}}``.
    """
    reports = list(reports)
    if not reports:
        raise ArgumentError("no reports to aggregate")
    targets = {r.fpr_target for r in reports}
    if len(targets) != 1:
        raise ArgumentError(f"reports mix fpr_target values {sorted(targets)}")
    n = len(reports)
    mean, std = {}, {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std(ddof=1)) if n > 1 else 0.0
    return {"n": n, "fpr_target": targets.pop(), "mean": mean, "std": std}


def permutation_importance(model, X, y, metric="accuracy", repeats=5, seed=0, names=None):
    """Drop in ``metric`` when each column is shuffled, averaged over ``repeats``.

    ``model`` needs ``predict_proba``. Returns ``[(name, importance), ...]``
    sorted by decreasing importance.
    """
    if repeats < 1:
        raise ArgumentError("repeats must be >= 1")
    if metric not in ("accuracy", "auc"):
        raise ArgumentError("metric must be 'accuracy' or 'auc'")
    X = np.asarray(X, dtype=np.float64)
    y = check_binary_labels(y)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ArgumentError("names must match the number of columns")

    def score(data):
        return getattr(compute_metrics(model.predict_proba(data)[:, 1], y), metric)

    base = score(X)
    rng = np.random.default_rng(seed)
    out = []
    for j, name in enumerate(names):
        drops = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = rng.permutation(Xp[:, j])
            drops.append(base - score(Xp))
        out.append((name, float(np.mean(drops))))
    out.sort(key=lambda t: (-t[1], names.index(t[0])))
    return out


def fmt(x) -> str:
    """Stable text form for CSV cells."""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
