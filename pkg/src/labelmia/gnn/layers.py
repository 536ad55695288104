"""Message-passing layers: GCN, GAT, GraphSAGE and GIN."""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from labelmia.errors import ArgumentError
from labelmia.nn import autograd as ag
from labelmia.nn.layers import Linear, Module, Parameter, glorot_uniform


class MessageGraph:
    """Structure of one forward pass: node count plus undirected edges.

    ``edge_index`` lists every undirected edge once, shape (2, E). Derived
    propagation matrices are built lazily and cached.
    """

    def __init__(self, num_nodes, edge_index):
        edge_index = np.asarray(edge_index, dtype=np.int64).reshape(2, -1)
        self.num_nodes = int(num_nodes)
        keep = edge_index[0] != edge_index[1]
        e = edge_index[:, keep]
        self.src = np.concatenate([e[0], e[1]])
        self.dst = np.concatenate([e[1], e[0]])

    @classmethod
    def from_graph(cls, graph):
        return cls(graph.num_nodes, graph.edge_index())

    @cached_property
    def adjacency(self):
        n = self.num_nodes
        a = sp.csr_matrix((np.ones(len(self.src)), (self.dst, self.src)), shape=(n, n))
        a.sum_duplicates()
        a.data[:] = 1.0  # duplicate edges collapse to weight 1
        return a

    @cached_property
    def degree(self):
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @cached_property
    def gcn_norm(self):
        """D^-1/2 (A + I) D^-1/2."""
        a = self.adjacency + sp.identity(self.num_nodes, format="csr")
        inv_sqrt = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel())
        d = sp.diags(inv_sqrt)
        return (d @ a @ d).tocsr()

    @cached_property
    def mean_adjacency(self):
        deg = self.degree
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        return (sp.diags(inv) @ self.adjacency).tocsr()

    @cached_property
    def gin_adjacency(self):
        """(1 + eps) I + A with eps = 0."""
        return (self.adjacency + sp.identity(self.num_nodes, format="csr")).tocsr()

    @cached_property
    def attention_edges(self):
        """(src, dst) incoming edges including one self-loop per node."""
        a = self.adjacency.tocoo()
        loops = np.arange(self.num_nodes)
        return (np.concatenate([a.col, loops]).astype(np.int64),
                np.concatenate([a.row, loops]).astype(np.int64))


class GCNConv(Module):
    def __init__(self, in_dim, out_dim, rng, dtype=np.float64, name=None):
        super().__init__(name)
        self.lin = Linear(in_dim, out_dim, rng, bias=False, dtype=dtype, name=f"{self.name}.lin")
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype))
        self.out_dim = out_dim

    def forward(self, x, graph):
        return ag.add(ag.spmm(graph.gcn_norm, self.lin(x)), self.bias)


class SAGEConv(Module):
    """Self transform plus transform of the neighbor mean."""

    def __init__(self, in_dim, out_dim, rng, dtype=np.float64, name=None):
        super().__init__(name)
        self.lin_self = Linear(in_dim, out_dim, rng, dtype=dtype, name=f"{self.name}.self")
        self.lin_neigh = Linear(in_dim, out_dim, rng, bias=False, dtype=dtype,
                                name=f"{self.name}.neigh")
        self.out_dim = out_dim

    def forward(self, x, graph):
        agg = ag.spmm(graph.mean_adjacency, x)
        return ag.add(self.lin_self(x), self.lin_neigh(agg))


class GINConv(Module):
    """MLP((1 + eps) * x_i + sum_j x_j) with eps fixed at 0."""

    def __init__(self, in_dim, out_dim, rng, hidden_dim=None, dtype=np.float64, name=None):
        super().__init__(name)
        hidden_dim = hidden_dim or out_dim
        self.lin1 = Linear(in_dim, hidden_dim, rng, dtype=dtype, name=f"{self.name}.mlp0")
        self.lin2 = Linear(hidden_dim, out_dim, rng, dtype=dtype, name=f"{self.name}.mlp1")
        self.out_dim = out_dim

    def forward(self, x, graph):
        h = ag.spmm(graph.gin_adjacency, x)
        return self.lin2(ag.relu(self.lin1(h)))


class GATConv(Module):
    """Single- or multi-head graph attention.

    Scores are LeakyReLU(0.2) of a_dst . W x_i + a_src . W x_j, normalized by a
    softmax over each node's incoming edges plus its self-loop. Heads are
    concatenated, or averaged when ``concat`` is false.
    """

    def __init__(self, in_dim, out_dim, rng, heads=1, concat=True, dtype=np.float64, name=None):
        super().__init__(name)
        self.heads = [Linear(in_dim, out_dim, rng, bias=False, dtype=dtype,
                             name=f"{self.name}.head{h}") for h in range(heads)]
        self.att_src = [Parameter(glorot_uniform(rng, out_dim, 1, dtype=dtype)) for _ in range(heads)]
        self.att_dst = [Parameter(glorot_uniform(rng, out_dim, 1, dtype=dtype)) for _ in range(heads)]
        self.concat = concat
        width = out_dim * heads if concat else out_dim
        self.bias = Parameter(np.zeros(width, dtype=dtype))
        self.out_dim = width
        self.last_attention = None

    def named_parameters(self, prefix=""):
        yield from super().named_parameters(prefix)
        for h, (a, b) in enumerate(zip(self.att_src, self.att_dst)):
            yield f"{prefix}att_src.{h}", a
            yield f"{prefix}att_dst.{h}", b

    def forward(self, x, graph):
        src, dst = graph.attention_edges
        n = graph.num_nodes
        outs, alphas = [], []
        for lin, a_src, a_dst in zip(self.heads, self.att_src, self.att_dst):
            wh = lin(x)
            score = ag.add(ag.take_rows(ag.matmul(wh, a_dst), dst),
                           ag.take_rows(ag.matmul(wh, a_src), src))
            e = ag.leaky_relu(score, 0.2)
            shift = np.full((n, 1), -np.inf, dtype=e.data.dtype)
            np.maximum.at(shift, dst, e.data)
            ex = ag.exp(ag.sub(e, shift[dst]))
            denom = ag.segment_sum(ex, dst, n)
            alpha = ag.div(ex, ag.take_rows(denom, dst))
            alphas.append(alpha.data[:, 0])
            outs.append(ag.segment_sum(ag.mul(ag.take_rows(wh, src), alpha), dst, n))
        self.last_attention = (src, dst, np.stack(alphas))
        if len(outs) == 1:
            out = outs[0]
        elif self.concat:
            out = ag.concat(outs, axis=1)
        else:
            out = outs[0]
            for o in outs[1:]:
                out = ag.add(out, o)
            out = ag.mul(out, 1.0 / len(outs))
        return ag.add(out, self.bias)


def make_conv(gnn_type, in_dim, out_dim, rng, heads=1, concat=True, hidden_dim=None,
              dtype=np.float64, name=None):
    if gnn_type == "GCN":
        return GCNConv(in_dim, out_dim, rng, dtype=dtype, name=name)
    if gnn_type == "GraphSAGE":
        return SAGEConv(in_dim, out_dim, rng, dtype=dtype, name=name)
    if gnn_type == "GIN":
        return GINConv(in_dim, out_dim, rng, hidden_dim=hidden_dim, dtype=dtype, name=name)
    if gnn_type == "GAT":
        return GATConv(in_dim, out_dim, rng, heads=heads, concat=concat, dtype=dtype, name=name)
    raise ArgumentError(f"unknown gnn_type {gnn_type!r}")
