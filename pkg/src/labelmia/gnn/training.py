"""Inductive full-batch training and the estimator wrapper."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from labelmia.errors import ArgumentError, NumericError
from labelmia.gnn.layers import MessageGraph
from labelmia.gnn.model import GnnConfig, GnnModel
from labelmia.graph import Graph, LabelOracle, PosteriorOracle, SubgraphQuery, softmax_rows
from labelmia.nn import autograd as ag
from labelmia.nn.optim import Adam
from labelmia.validation import check_graph

logger = logging.getLogger(__name__)


class TrainedGnn:
    """A fitted node classifier.

    Attack code receives it only wrapped by :func:`as_label_oracle` or
    :func:`as_posterior_oracle`; ``logits`` is the hook those wrappers call.
    """

    def __init__(self, config: GnnConfig, model: GnnModel, train_acc=float("nan"),
                 test_acc=float("nan"), train_nodes_id=""):
        self.config = config
        self._model = model
        self.train_acc = train_acc
        self.test_acc = test_acc
        self.train_nodes_id = train_nodes_id

    @property
    def overfitting_gap(self) -> float:
        return self.train_acc - self.test_acc

    @property
    def in_dim(self):
        return self._model.in_dim

    @property
    def num_classes(self):
        return self._model.num_classes

    def logits(self, features, edge_index) -> np.ndarray:
        return self._model.logits(features, edge_index)

    def state_arrays(self):
        return self._model.state_arrays()

    def __repr__(self):
        return (f"TrainedGnn({self.config.gnn_type}, train_acc={self.train_acc:.3f}, "
                f"test_acc={self.test_acc:.3f})")


def as_label_oracle(model) -> LabelOracle:
    return LabelOracle(model)


def as_posterior_oracle(model) -> PosteriorOracle:
    return PosteriorOracle(model)


def _accuracy(model: GnnModel, graph: Graph, nodes=None):
    z = model.logits(graph.features, graph.edge_index())
    pred = np.argmax(z, axis=1)
    if nodes is None:
        nodes = np.arange(graph.num_nodes)
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        return float("nan")
    return float(np.mean(pred[nodes] == graph.labels[nodes]))


def init_model(config: GnnConfig, in_dim: int, num_classes: int) -> GnnModel:
    init_seq = np.random.SeedSequence([config.seed, 0])
    return GnnModel(config, in_dim, num_classes, np.random.default_rng(init_seq))


def train_gnn(config: GnnConfig, train_graph: Graph, eval_graph: Graph | None = None,
              eval_nodes=None) -> TrainedGnn:
    """Train on ``train_graph`` (already induced on training nodes).

    Test accuracy is measured on ``eval_nodes`` of ``eval_graph``.
    Deterministic for a fixed ``config.seed``.
    """
    check_graph(train_graph)
    model = init_model(config, train_graph.feature_dim, train_graph.num_classes)
    dropout_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    opt = Adam(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    dtype = np.dtype(config.dtype)
    x = ag.Tensor(np.asarray(train_graph.features, dtype=dtype))
    y = train_graph.labels
    graph = MessageGraph.from_graph(train_graph)
    model.train()
    for epoch in range(config.epochs):
        model.zero_grad()
        try:
            loss = ag.softmax_cross_entropy(model(x, graph, rng=dropout_rng), y)
        except NumericError as exc:
            raise NumericError(str(exc), layer=exc.layer, epoch=epoch) from exc
        if not np.isfinite(loss.data):
            raise NumericError("non-finite training loss", epoch=epoch)
        loss.backward()
        opt.step()
    model.eval()
    train_acc = _accuracy(model, train_graph)
    test_acc = float("nan")
    if eval_graph is not None and eval_nodes is not None:
        test_acc = _accuracy(model, eval_graph, eval_nodes)
    logger.debug("trained %s: train_acc=%.3f test_acc=%.3f", config.gnn_type, train_acc, test_acc)
    return TrainedGnn(config, model, train_acc, test_acc)


class GnnNodeClassifier(ClassifierMixin, BaseEstimator):
    """Estimator facade over :func:`train_gnn`.

    ``fit`` takes a :class:`~labelmia.graph.Graph` (labels are read from it
    unless ``y`` is given). ``predict`` accepts a graph or a star query and
    returns one class per node.
    """

    def __init__(self, gnn_type="GCN", num_layers=3, hidden_dim=16, use_batchnorm=True,
                 dropout_rate=0.5, use_jumping_knowledge=True, gat_heads=1,
                 learning_rate=6e-3, weight_decay=0.5, epochs=400, random_state=0,
                 dtype="float64"):
        self.gnn_type = gnn_type
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.use_batchnorm = use_batchnorm
        self.dropout_rate = dropout_rate
        self.use_jumping_knowledge = use_jumping_knowledge
        self.gat_heads = gat_heads
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.random_state = random_state
        self.dtype = dtype

    @classmethod
    def from_config(cls, config: GnnConfig) -> "GnnNodeClassifier":
        d = config.to_dict()
        d["random_state"] = d.pop("seed")
        return cls(**d)

    def to_config(self) -> GnnConfig:
        params = self.get_params()
        params["seed"] = params.pop("random_state")
        return GnnConfig(**params)

    def fit(self, X, y=None):
        graph = check_graph(X)
        if y is not None:
            y = np.asarray(y, dtype=np.int64)
            graph = Graph(graph.features, y, graph.indptr, graph.indices,
                          max(graph.num_classes, int(y.max()) + 1))
        self.trained_ = train_gnn(self.to_config(), graph)
        self.classes_ = np.arange(graph.num_classes)
        self.n_features_in_ = graph.feature_dim
        return self

    def _logits(self, X):
        check_is_fitted(self, "trained_")
        if isinstance(X, SubgraphQuery):
            return self.trained_.logits(X.stacked_features(), X.edges.T)
        graph = check_graph(X)
        if graph.feature_dim != self.n_features_in_:
            raise ArgumentError(f"expected {self.n_features_in_} features, got {graph.feature_dim}")
        return self.trained_.logits(graph.features, graph.edge_index())

    def predict_proba(self, X):
        return softmax_rows(self._logits(X))

    def predict(self, X):
        return np.argmax(self._logits(X), axis=1)

    def score(self, X, y=None, sample_weight=None):
        graph = check_graph(X)
        y = graph.labels if y is None else y
        return super().score(graph, y, sample_weight)
