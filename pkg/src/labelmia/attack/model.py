"""The binary attack classifier (MLP trained with binary cross-entropy)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from labelmia.attack.features import records_to_arrays
from labelmia.errors import ArgumentError
from labelmia.nn import autograd as ag
from labelmia.nn.layers import Activation, Linear, Sequential
from labelmia.nn.optim import Adam
from labelmia.validation import check_binary_labels, check_both_classes

SELECTION_STRATEGIES = ("train_acc", "test_acc", "train_loss", "test_loss", "evaluate_acc")


@dataclass(frozen=True)
class AttackMlpConfig:
    hidden_layer_sizes: tuple = (64, 64)
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0:
            raise ArgumentError("epochs and batch_size must be >= 1, learning_rate >= 0")


class ColumnStandardizer:
    """Per-column z-scoring; zero-variance columns pass through unchanged."""

    def fit(self, X):
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        constant = std == 0
        self.mean_[constant] = 0.0
        std[constant] = 1.0
        self.scale_ = std
        return self

    def transform(self, X):
        return (X - self.mean_) / self.scale_


class AttackClassifier(ClassifierMixin, BaseEstimator):
    """MLP membership classifier with per-epoch snapshot selection.

    After every epoch the model is scored on the training list and on the
    holdout list; the snapshot that is best under ``selection`` (highest
    accuracy or lowest loss, earliest on ties) is kept. ``evaluate_acc``
    scores an extra evaluation list that a real adversary would not have,
    and marks the fitted model ``oracle_only_``.
    """

    def __init__(self, hidden_layer_sizes=(64, 64), learning_rate=1e-3, epochs=300,
                 batch_size=32, selection="test_acc", random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.selection = selection
        self.random_state = random_state

    def _build(self, n_features, rng):
        layers, dim = [], n_features
        for i, width in enumerate(self.hidden_layer_sizes):
            layers += [Linear(dim, width, rng, name=f"fc{i}"), Activation("relu")]
            dim = width
        layers.append(Linear(dim, 1, rng, name="out"))
        return Sequential(*layers, name="attack_mlp")

    def _score(self, net, X, y):
        with ag.no_grad():
            z = net(ag.Tensor(X)).data[:, 0]
        loss = float(ag.binary_cross_entropy_with_logits(ag.Tensor(z), y).data)
        acc = float(np.mean((z >= 0).astype(np.int64) == y))
        return acc, loss

    def fit(self, X, y, X_holdout=None, y_holdout=None, X_eval=None, y_eval=None):
        if self.selection not in SELECTION_STRATEGIES:
            raise ArgumentError(f"selection must be one of {SELECTION_STRATEGIES}")
        X, y = check_X_y(X, y, dtype=np.float64)
        y = check_binary_labels(y)
        check_both_classes(y, "training membership labels")
        needs_holdout = self.selection in ("test_acc", "test_loss")
        if needs_holdout and X_holdout is None:
            raise ArgumentError(f"selection={self.selection!r} needs a holdout list")
        if self.selection == "evaluate_acc" and X_eval is None:
            raise ArgumentError("selection='evaluate_acc' needs an explicit evaluation list")

        self.scaler_ = ColumnStandardizer().fit(X)
        Xs = self.scaler_.transform(X)
        held = None
        if X_holdout is not None:
            Xh, yh = check_X_y(X_holdout, y_holdout, dtype=np.float64)
            held = (self.scaler_.transform(Xh), check_binary_labels(yh))
        evaluation = None
        if X_eval is not None:
            Xe, ye = check_X_y(X_eval, y_eval, dtype=np.float64)
            evaluation = (self.scaler_.transform(Xe), check_binary_labels(ye))

        ss = np.random.SeedSequence(self.random_state)
        init_rng, shuffle_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        net = self._build(X.shape[1], init_rng)
        params = net.parameters()
        opt = Adam(params, lr=self.learning_rate)
        n = len(y)
        trace, best, best_key = [], None, None
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                net.zero_grad()
                loss = ag.binary_cross_entropy_with_logits(net(ag.Tensor(Xs[idx])), y[idx])
                loss.backward()
                opt.step()
            row = {"epoch": epoch}
            row["train_acc"], row["train_loss"] = self._score(net, Xs, y)
            if held is not None:
                row["test_acc"], row["test_loss"] = self._score(net, *held)
            if evaluation is not None:
                row["evaluate_acc"], _ = self._score(net, *evaluation)
            trace.append(row)
            value = row[self.selection]
            key = -value if self.selection.endswith("_acc") else value
            if best_key is None or key < best_key:
                best_key = key
                best = [p.data.copy() for p in params]
        for p, data in zip(params, best):
            p.data = data
        self.net_ = net
        self.trace_ = trace
        self.best_epoch_ = min(range(len(trace)), key=lambda i: (
            -trace[i][self.selection] if self.selection.endswith("_acc")
            else trace[i][self.selection], i))
        self.oracle_only_ = self.selection == "evaluate_acc"
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ArgumentError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        with ag.no_grad():
            return self.net_(ag.Tensor(self.scaler_.transform(X))).data[:, 0]

    def predict_proba(self, X):
        p = ag._stable_sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


def train_attack_model(records, holdout=None, config: AttackMlpConfig | None = None,
                       selection="test_acc", evaluation=None):
    """Fit an :class:`AttackClassifier` on attack records.

    Returns ``(model, trace)``; ``trace`` holds one metrics dict per epoch.
    """
    config = config or AttackMlpConfig()
    X, y, _ = records_to_arrays(records)
    kwargs = {}
    if holdout:
        kwargs["X_holdout"], kwargs["y_holdout"], _ = records_to_arrays(holdout)
    if evaluation:
        kwargs["X_eval"], kwargs["y_eval"], _ = records_to_arrays(evaluation)
    model = AttackClassifier(hidden_layer_sizes=tuple(config.hidden_layer_sizes),
                             learning_rate=config.learning_rate, epochs=config.epochs,
                             batch_size=config.batch_size, selection=selection,
                             random_state=config.seed)
    model.fit(X, y, **kwargs)
    return model, model.trace_
