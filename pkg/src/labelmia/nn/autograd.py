"""Reverse-mode differentiation over dense numpy arrays.

Only the operations needed by the GNN layers and the attack MLP are
provided. Broadcasting is limited to adding a row vector (bias) or a column
vector to a matrix.
"""

from __future__ import annotations

import contextlib

import numpy as np

from labelmia.errors import ArgumentError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate gradients of this tensor into every upstream leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ArgumentError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads = {id(self): grad}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: mul(self, -1.0)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _make(data, parents, backward):
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary_shapes(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ArgumentError(f"shape mismatch {a.shape} vs {b.shape}") from exc


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ArgumentError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def spmm(adj, x):
    """Constant sparse matrix times tensor."""
    x = as_tensor(x)
    if adj.shape[1] != x.shape[0]:
        raise ArgumentError(f"spmm shape mismatch {adj.shape} @ {x.shape}")
    return _make(np.asarray(adj @ x.data), (x,), lambda g: (np.asarray(adj.T @ g),))


def sum(x, axis=None, keepdims=False):  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out), (x,), back)


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    scale = np.where(x.data > 0, 1.0, slope)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))


def elu(x, alpha=1.0):
    x = as_tensor(x)
    neg = alpha * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(x.data > 0, x.data, neg)
    slope = np.where(x.data > 0, 1.0, neg + alpha)
    return _make(out, (x,), lambda g: (g * slope,))


def sigmoid(x):
    x = as_tensor(x)
    out = _stable_sigmoid(x.data)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=axis)))


def take_rows(x, index):
    """Gather rows ``x[index]``; gradient scatters back with accumulation."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)

    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return _make(x.data[index], (x,), back)


def segment_sum(x, segment_ids, num_segments):
    """Sum rows of ``x`` into ``num_segments`` buckets."""
    x = as_tensor(x)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    out = np.zeros((num_segments,) + x.shape[1:], dtype=x.dtype)
    np.add.at(out, segment_ids, x.data)
    return _make(out, (x,), lambda g: (g[segment_ids],))


def scale_by_mask(x, mask):
    """Multiply by a constant array (dropout masks, fixed weights)."""
    x = as_tensor(x)
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def batch_norm(x, gamma, beta, eps):
    """Per-column standardization in training mode; returns (out, mean, var)."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data * xhat + beta.data
    n = x.shape[0]

    def back(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = g * gamma.data
        dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), back), mu, var


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy of integer ``targets`` under softmax(``logits``)."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    z = logits.data
    if z.ndim != 2 or targets.shape != (z.shape[0],):
        raise ArgumentError(f"logits {z.shape} do not match targets {targets.shape}")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    n = z.shape[0]
    loss = -logp[np.arange(n), targets].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(n), targets] -= 1.0
        return (g * p / n,)

    return _make(np.asarray(loss), (logits,), back)


def binary_cross_entropy_with_logits(logits, targets):
    """Mean binary cross-entropy of sigmoid(``logits``) against 0/1 targets."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=logits.dtype).reshape(logits.shape)
    z = logits.data
    # log(1 + exp(-|z|)) formulation avoids overflow
    loss = (np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))).mean()
    n = z.size

    def back(g):
        return (g * (_stable_sigmoid(z) - t) / n,)

    return _make(np.asarray(loss), (logits,), back)


def mse_loss(pred, target):
    pred, target = as_tensor(pred), as_tensor(target)
    diff = sub(pred, target)
    return mean(mul(diff, diff))
