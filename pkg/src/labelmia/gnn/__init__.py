"""GCN, GAT, GraphSAGE and GIN node classifiers."""

from labelmia.gnn.checkpoint import load_checkpoint, save_checkpoint
from labelmia.gnn.layers import GATConv, GCNConv, GINConv, MessageGraph, SAGEConv
from labelmia.gnn.model import GNN_TYPES, GnnConfig, GnnModel, apply_defenses, preset_config
from labelmia.gnn.training import (
    GnnNodeClassifier,
    TrainedGnn,
    as_label_oracle,
    as_posterior_oracle,
    train_gnn,
)

__all__ = [
    "GATConv", "GCNConv", "GINConv", "GNN_TYPES", "GnnConfig", "GnnModel",
    "GnnNodeClassifier", "MessageGraph", "SAGEConv", "TrainedGnn", "apply_defenses",
    "as_label_oracle", "as_posterior_oracle", "load_checkpoint", "preset_config",
    "save_checkpoint", "train_gnn",
]
