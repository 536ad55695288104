"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np


def numeric_grad(f, x: np.ndarray, eps=1e-5, index=None):
    """Central differences of scalar ``f()`` w.r.t. entries of ``x`` (mutated in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    positions = range(flat.size) if index is None else index
    for i in positions:
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def relative_error(a, b, floor=1e-8):
    """Elementwise |a - b| / max(|a|, |b|, floor)."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_gradients(loss_fn, tensors, eps=1e-5, sample=None, rng=None, floor=1e-6):
    """Compare analytic and numeric gradients of ``loss_fn()`` for ``tensors``.

    ``loss_fn`` must rebuild the graph and return a scalar Tensor. With
    ``sample`` set, only that many random entries per tensor are probed.
    Returns the maximum relative error observed.
    """
    for t in tensors:
        t.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    for t, ga in zip(tensors, analytic):
        index = None
        if sample is not None and t.data.size > sample:
            index = rng.choice(t.data.size, size=sample, replace=False)
        gn = numeric_grad(lambda: float(loss_fn().data), t.data, eps=eps, index=index)
        sel = slice(None) if index is None else index
        err = relative_error(ga.reshape(-1)[sel], gn.reshape(-1)[sel], floor=floor)
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
