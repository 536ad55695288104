"""Parameter containers and the dense layers used by the models."""

from __future__ import annotations

import numpy as np

from labelmia.errors import ArgumentError, NumericError
from labelmia.nn import autograd as ag
from labelmia.nn.autograd import Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


class Module:
    """Minimal module tree with train/eval modes.

    Calling a module runs :meth:`forward` and raises :class:`NumericError`
    naming the module when its output is not finite.
    """

    def __init__(self, name=None):
        self.training = True
        self.name = name or type(self).__name__

    def __call__(self, *args, **kwargs):
        out = self.forward(*args, **kwargs)
        data = out.data if isinstance(out, Tensor) else None
        if data is not None and not np.isfinite(data).all():
            raise NumericError("non-finite activation", layer=self.name)
        return out

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                yield from (v for v in value if isinstance(v, Module))

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield from v.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for key in getattr(self, "_buffers", ()):
            yield prefix + key, getattr(self, key)
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield from v.named_buffers(f"{prefix}{key}.{i}.")

    def state_arrays(self):
        """Parameters then buffers, in a stable order."""
        out = [(k, p.data) for k, p in self.named_parameters()]
        out += list(self.named_buffers())
        return out

    def load_state_arrays(self, arrays: dict):
        for key, p in self.named_parameters():
            p.data = np.array(arrays[key], dtype=p.data.dtype)
        for key, _ in list(self.named_buffers()):
            owner, attr = self._resolve(key)
            setattr(owner, attr, np.array(arrays[key]))

    def _resolve(self, key):
        parts = key.split(".")
        obj = self
        for part in parts[:-1]:
            obj = obj[int(part)] if isinstance(obj, (list, tuple)) else getattr(obj, part)
        return obj, parts[-1]

    def train(self, mode=True):
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def glorot_uniform(rng, fan_in, fan_out, shape=None, dtype=np.float64):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True, dtype=np.float64, name=None):
        super().__init__(name)
        self.weight = Parameter(glorot_uniform(rng, in_dim, out_dim, dtype=dtype))
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None
        self.in_dim, self.out_dim = in_dim, out_dim

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ArgumentError(f"{self.name}: expected {self.in_dim} input columns, got {x.shape[-1]}")
        out = ag.matmul(x, self.weight)
        return ag.add(out, self.bias) if self.bias is not None else out


class BatchNorm1d(Module):
    """Column-wise batch normalization over node rows.

    Training mode standardizes with batch statistics and updates running
    estimates (unbiased variance, like common frameworks); eval mode uses the
    running estimates.
    """

    _buffers = ("running_mean", "running_var")

    def __init__(self, dim, eps=1e-5, momentum=0.1, dtype=np.float64, name=None):
        super().__init__(name)
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)
        self.eps, self.momentum = eps, momentum

    def forward(self, x):
        if not self.training:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            x = ag.scale_by_mask(ag.sub(x, self.running_mean), inv)
            return ag.add(ag.mul(x, self.gamma), self.beta)
        n = x.shape[0]
        if n < 2:
            raise NumericError("batch normalization needs at least 2 rows in training mode",
                               layer=self.name)
        out, mu, var = ag.batch_norm(x, self.gamma, self.beta, self.eps)
        m = self.momentum
        self.running_mean = (1 - m) * self.running_mean + m * mu
        self.running_var = (1 - m) * self.running_var + m * var * n / (n - 1)
        return out


class Dropout(Module):
    """Inverted dropout; identity in eval mode or at rate 0."""

    def __init__(self, rate, name=None):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, rng=None):
        if not self.training or self.rate == 0.0:
            return x
        if rng is None:
            raise ArgumentError("dropout in training mode needs an rng")
        keep = rng.random(x.shape) >= self.rate
        return ag.scale_by_mask(x, keep / (1.0 - self.rate))


def dropout(x, rate, rng, training=True):
    """Functional form of :class:`Dropout`."""
    layer = Dropout(rate)
    layer.training = training
    return layer(ag.as_tensor(x), rng=rng)


class Sequential(Module):
    def __init__(self, *layers, name=None):
        super().__init__(name)
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Activation(Module):
    _fns = {"relu": ag.relu, "elu": ag.elu, "sigmoid": ag.sigmoid,
            "leaky_relu": ag.leaky_relu}

    def __init__(self, kind, name=None):
        super().__init__(name or kind)
        self.fn = self._fns[kind]

    def forward(self, x):
        return self.fn(x)


def forward_backward(model, inputs, loss_target, loss="cross_entropy"):
    """Run ``model`` on ``inputs``, compute the loss and populate gradients.

    Returns the scalar loss. ``loss`` is one of ``cross_entropy``, ``bce``
    or ``mse``.
    """
    model.zero_grad()
    out = model(*inputs) if isinstance(inputs, (list, tuple)) else model(inputs)
    if loss == "cross_entropy":
        value = ag.softmax_cross_entropy(out, loss_target)
    elif loss == "bce":
        value = ag.binary_cross_entropy_with_logits(out, loss_target)
    elif loss == "mse":
        value = ag.mse_loss(out, loss_target)
    else:
        raise ArgumentError(f"unknown loss {loss!r}")
    if not np.isfinite(value.data):
        raise NumericError("non-finite loss", layer="loss")
    if value.requires_grad:
        value.backward()
    return float(value.data)
