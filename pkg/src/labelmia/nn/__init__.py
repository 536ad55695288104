"""Small reverse-mode differentiation engine and training primitives."""

from labelmia.nn.autograd import Tensor, no_grad
from labelmia.nn.layers import (
    Activation,
    BatchNorm1d,
    Dropout,
    Linear,
    Module,
    Parameter,
    Sequential,
    dropout,
    forward_backward,
)
from labelmia.nn.optim import Adam

__all__ = [
    "Activation", "Adam", "BatchNorm1d", "Dropout", "Linear", "Module", "Parameter",
    "Sequential", "Tensor", "dropout", "forward_backward", "no_grad",
]
