"""Minimal dense-array numerics with reverse-mode differentiation."""

from . import ops
from .layers import AffineLayer, Conv1dLayer, affine_forward, kaiming_uniform
from .optim import OptimizerState, adam_step
from .tensor import Tape, TapeEntry, Tensor, backward, no_grad

__all__ = [
    "ops",
    "Tensor",
    "Tape",
    "TapeEntry",
    "backward",
    "no_grad",
    "AffineLayer",
    "Conv1dLayer",
    "affine_forward",
    "kaiming_uniform",
    "OptimizerState",
    "adam_step",
]
