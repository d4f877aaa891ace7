"""Adaptive-moment parameter updates (bias-corrected, float64, deterministic)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import UsageError
from .tensor import Tensor


@dataclass
class OptimizerState:
    """Per-parameter first/second moments plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float = 1e-3, **kw) -> "OptimizerState":
        state = cls(lr=lr, **kw)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(state: OptimizerState, params: list[Tensor], grads: list[np.ndarray] | None = None) -> list[Tensor]:
    """One in-place Adam update; ``grads`` defaults to each param's ``.grad``."""
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise UsageError("optimizer state, params and grads must align one-to-one")
    for i, g in enumerate(grads):
        if g is None:
            raise UsageError(f"parameter {i} has no gradient; run backward first")
        if np.shape(g) != params[i].data.shape:
            raise UsageError(f"gradient {i} shape {np.shape(g)} != param shape {params[i].data.shape}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data = p.data - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params
