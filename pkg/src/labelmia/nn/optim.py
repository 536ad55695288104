"""Adam with coupled L2 weight decay."""

from __future__ import annotations

import numpy as np

from labelmia.errors import NumericError


class Adam:
    """Adam optimizer.

    ``weight_decay`` adds ``weight_decay * p`` to each gradient before the
    moment updates (classic L2 coupling, not decoupled AdamW).
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        """Apply one update. ``grads`` defaults to each parameter's ``.grad``."""
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                     for p in self.params]
        for g in grads:
            if not np.isfinite(g).all():
                raise NumericError("non-finite gradient passed to Adam")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.lr == 0.0:
                continue
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
