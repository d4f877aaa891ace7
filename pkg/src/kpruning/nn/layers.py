"""Parameterized layers: seeded init, affine and conv1d building blocks."""

from __future__ import annotations

import numpy as np

from ..exceptions import DimensionError
from . import ops
from .tensor import Tensor


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class AffineLayer:
    """weight [out_dim, in_dim] and bias [out_dim], both trainable."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        if in_dim < 1 or out_dim < 1:
            raise DimensionError(f"affine dims must be positive, got {in_dim}->{out_dim}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.weight = Tensor(kaiming_uniform(rng, (out_dim, in_dim), in_dim), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return ops.affine(x, self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def n_params(self) -> int:
        return self.weight.size + self.bias.size


def affine_forward(layer: AffineLayer, x: Tensor) -> Tensor:
    """out[b] = layer.weight @ x[b] + layer.bias, recorded on the tape."""
    return layer(x)


class Conv1dLayer:
    """weight [ch_out, ch_in, kernel] and bias [ch_out]; valid padding."""

    def __init__(
        self,
        ch_in: int,
        ch_out: int,
        kernel: int,
        stride: int = 1,
        rng: np.random.Generator | None = None,
    ):
        if min(ch_in, ch_out, kernel, stride) < 1:
            raise DimensionError("conv1d dims and stride must be positive")
        if rng is None:
            rng = np.random.default_rng(0)
        fan_in = ch_in * kernel
        self.weight = Tensor(kaiming_uniform(rng, (ch_out, ch_in, kernel), fan_in), requires_grad=True)
        self.bias = Tensor(np.zeros(ch_out), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias, stride=self.stride)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def n_params(self) -> int:
        return self.weight.size + self.bias.size
