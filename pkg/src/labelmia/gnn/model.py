"""GNN configuration, overfitting presets and the layer stack."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from labelmia.errors import ArgumentError
from labelmia.gnn.layers import MessageGraph, make_conv
from labelmia.nn import autograd as ag
from labelmia.nn.layers import BatchNorm1d, Dropout, Linear, Module

GNN_TYPES = ("GCN", "GAT", "GraphSAGE", "GIN")


@dataclass(frozen=True)
class GnnConfig:
    """Architecture and training hyperparameters of one node classifier.

    ``num_layers`` counts message-passing layers. With jumping knowledge the
    outputs of all of them are concatenated and fed to a final linear
    classifier; without it the last layer emits the class logits directly.
    """

    gnn_type: str = "GCN"
    num_layers: int = 3
    hidden_dim: int = 16
    use_batchnorm: bool = True
    dropout_rate: float = 0.5
    use_jumping_knowledge: bool = True
    gat_heads: int = 1
    learning_rate: float = 6e-3
    weight_decay: float = 0.5
    epochs: int = 400
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.gnn_type not in GNN_TYPES:
            raise ArgumentError(f"gnn_type must be one of {GNN_TYPES}, got {self.gnn_type!r}")
        if self.num_layers < 2:
            raise ArgumentError("num_layers must be >= 2")
        if self.hidden_dim < 1:
            raise ArgumentError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ArgumentError("dropout_rate must lie in [0, 1)")
        if self.gat_heads < 1:
            raise ArgumentError("gat_heads must be >= 1")
        if self.epochs < 0 or self.learning_rate < 0 or self.weight_decay < 0:
            raise ArgumentError("epochs, learning_rate and weight_decay must be non-negative")
        if self.dtype not in ("float64", "float32"):
            raise ArgumentError("dtype must be float64 or float32")

    def replace(self, **changes) -> "GnnConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d) -> "GnnConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - fields
        if unknown:
            raise ArgumentError(f"unknown GnnConfig keys: {sorted(unknown)}")
        return cls(**d)


def preset_config(overfitting: str, gnn_type: str = "GCN", seed: int = 0) -> GnnConfig:
    """Low- or high-overfitting hyperparameters.

    low: 3 layers, 16 hidden units, Adam lr 6e-3 with weight decay 0.5,
    400 epochs, BatchNorm + Dropout(0.5) + jumping knowledge.
    high: 5 layers, 64 hidden units, Adam lr 1e-3 without weight decay,
    200 epochs, no regularizing components.
    """
    if overfitting == "low":
        return GnnConfig(gnn_type=gnn_type, num_layers=3, hidden_dim=16, use_batchnorm=True,
                         dropout_rate=0.5, use_jumping_knowledge=True, learning_rate=6e-3,
                         weight_decay=0.5, epochs=400, seed=seed)
    if overfitting == "high":
        return GnnConfig(gnn_type=gnn_type, num_layers=5, hidden_dim=64, use_batchnorm=False,
                         dropout_rate=0.0, use_jumping_knowledge=False, learning_rate=1e-3,
                         weight_decay=0.0, epochs=200, seed=seed)
    raise ArgumentError(f"overfitting must be 'low' or 'high', got {overfitting!r}")


def apply_defenses(config: GnnConfig, normalization: bool, dropout: bool,
                   regularization: bool, jumping_knowledge: bool) -> GnnConfig:
    """Toggle the four overfitting defenses on top of ``config``."""
    return config.replace(use_batchnorm=normalization,
                          dropout_rate=0.5 if dropout else 0.0,
                          weight_decay=0.5 if regularization else 0.0,
                          use_jumping_knowledge=jumping_knowledge)


class GnnModel(Module):
    """Stack of message-passing layers with optional BatchNorm, dropout and JK."""

    def __init__(self, config: GnnConfig, in_dim: int, num_classes: int, rng):
        super().__init__("gnn")
        self.config = config
        self.in_dim, self.num_classes = in_dim, num_classes
        dtype = np.dtype(config.dtype)
        jk = config.use_jumping_knowledge
        heads = config.gat_heads
        act = "elu" if config.gnn_type == "GAT" else "relu"
        self.activation = getattr(ag, act)
        self.convs, self.norms, self.drops = [], [], []
        dim = in_dim
        for i in range(config.num_layers):
            last = i == config.num_layers - 1
            out = num_classes if (last and not jk) else config.hidden_dim
            conv = make_conv(config.gnn_type, dim, out, rng, heads=heads,
                             concat=not (last and not jk), hidden_dim=config.hidden_dim,
                             dtype=dtype, name=f"conv{i}")
            self.drops.append(Dropout(config.dropout_rate, name=f"dropout{i}"))
            self.convs.append(conv)
            if config.use_batchnorm and not (last and not jk):
                self.norms.append(BatchNorm1d(conv.out_dim, dtype=dtype, name=f"norm{i}"))
            dim = conv.out_dim
        self.jk_dim = sum(c.out_dim for c in self.convs) if jk else None
        if jk:
            self.jk_drop = Dropout(config.dropout_rate, name="dropout_jk")
            self.jk_linear = Linear(self.jk_dim, num_classes, rng, dtype=dtype, name="jk_linear")

    def forward(self, x, graph: MessageGraph, rng=None):
        if x.shape[1] != self.in_dim:
            raise ArgumentError(f"model expects {self.in_dim} features, got {x.shape[1]}")
        jk = self.config.use_jumping_knowledge
        outputs = []
        h = x
        for i, (conv, drop) in enumerate(zip(self.convs, self.drops)):
            h = drop(h, rng=rng)
            h = conv(h, graph)
            if i == len(self.convs) - 1 and not jk:
                break
            if self.norms:
                h = self.norms[i](h)
            h = self.activation(h)
            outputs.append(h)
        if jk:
            h = self.jk_linear(self.jk_drop(ag.concat(outputs, axis=1), rng=rng))
        return h

    def logits(self, features, edge_index) -> np.ndarray:
        """Inference-mode logits for arbitrary (features, undirected edges)."""
        was_training = self.training
        self.eval()
        try:
            with ag.no_grad():
                x = ag.Tensor(np.asarray(features, dtype=np.dtype(self.config.dtype)))
                graph = MessageGraph(x.shape[0], edge_index)
                return self(x, graph).data
        finally:
            self.train(was_training)
