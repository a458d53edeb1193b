"""Minimal dense-tensor engine with reverse-mode differentiation."""

from . import ops
from .counter import OpCounter
from .tensor import Parameter, Tensor, as_tensor, no_grad

__all__ = ["OpCounter", "Parameter", "Tensor", "as_tensor", "no_grad", "ops"]
