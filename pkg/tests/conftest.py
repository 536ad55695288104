import numpy as np
import pytest

from labelmia.data import generate_sbm
from labelmia.graph import Graph


class ScriptedModel:
    """Stand-in for a trained model: logits come from a user function."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def logits(self, features, edge_index):
        self.calls += 1
        return np.asarray(self.fn(np.asarray(features), np.asarray(edge_index)), dtype=np.float64)


class LinearModel:
    """Deterministic 'GNN': W x_i plus the mean of neighbor rows."""

    def __init__(self, dim, num_classes, seed=0, scale=1.0):
        rng = np.random.default_rng(seed)
        self.w = rng.normal(size=(dim, num_classes))
        self.scale = scale

    def logits(self, features, edge_index):
        x = np.asarray(features, dtype=np.float64)
        n = x.shape[0]
        agg = x.copy()
        count = np.ones(n)
        for a, b in np.asarray(edge_index).reshape(2, -1).T:
            agg[a] += x[b]
            agg[b] += x[a]
            count[a] += 1
            count[b] += 1
        return self.scale * ((agg / count[:, None]) @ self.w)


def path_graph(n=4, dim=2):
    edges = [(i, i + 1) for i in range(n - 1)]
    return Graph.from_edges(np.zeros((n, dim)), np.zeros(n, dtype=int), edges, 1)


def random_graph(n, p, dim=3, classes=3, seed=0):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1)
    edges = np.argwhere(upper)
    feats = rng.random((n, dim))
    labels = rng.integers(0, classes, n)
    return Graph.from_edges(feats, labels, edges.reshape(-1, 2), classes)


@pytest.fixture
def small_sbm():
    return generate_sbm(120, 3, 0.08, 0.01, 12, 3.0, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
