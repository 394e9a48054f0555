"""Condensed deep-association learning for co-salient object detection."""

from . import ops
from .tensor import Tensor, no_grad, tensor

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "ops", "tensor"]
