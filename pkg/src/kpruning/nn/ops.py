"""Differentiable operations over :class:`~kpruning.nn.tensor.Tensor`.

The operator set is deliberately small: what affine encoders, a two-layer
alignment map, cosine scoring, bidirectional log-softmax and a KL loss
need, nothing more. Every op returns a taped tensor whose vjp closure is
written against the exact forward formula.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import DegenerateInputError, DimensionError, UsageError
from .tensor import Tensor, as_tensor, record

Array = np.ndarray

_AXES = {"row": 1, "column": 0}


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also broadcasts a rank-1 ``b`` across rows (bias)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        def vjp(g: Array):
            return g, g
    elif b.data.ndim == 1 and a.data.ndim >= 2 and a.shape[-1] == b.shape[0]:
        axes = tuple(range(a.data.ndim - 1))

        def vjp(g: Array):
            return g, g.sum(axis=axes)
    elif b.data.ndim == 0:
        def vjp(g: Array):
            return g, np.sum(g)
    else:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}")
    return record(a.data + b.data, (a, b), vjp, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equal shapes, or tensor * scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and b.data.ndim != 0 and a.data.ndim != 0:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    bd, ad = b.data, a.data

    def vjp(g: Array):
        ga = g * bd
        gb = g * ad
        if bd.ndim == 0 and ad.ndim != 0:
            gb = np.sum(gb)
        if ad.ndim == 0 and bd.ndim != 0:
            ga = np.sum(ga)
        return ga, gb

    return record(ad * bd, (a, b), vjp, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (not differentiated through)."""
    x = as_tensor(x)
    c = float(c)
    return record(x.data * c, (x,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} @ {b.shape} do not agree")
    ad, bd = a.data, b.data

    def vjp(g: Array):
        return g @ bd.T, ad.T @ g

    return record(ad @ bd, (a, b), vjp, "matmul")


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """out[b] = weight @ x[b] + bias for x of shape [batch, in_dim]."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 2:
        raise DimensionError(f"affine expects a [batch, in_dim] input, got {x.shape}")
    out_dim, in_dim = weight.shape
    if x.shape[1] != in_dim or bias.shape != (out_dim,):
        raise DimensionError(
            f"affine dims disagree: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    xd, wd = x.data, weight.data

    def vjp(g: Array):
        return g @ wd, g.T @ xd, g.sum(axis=0)

    return record(xd @ wd.T + bias.data, (x, weight, bias), vjp, "affine")


def relu(x: Tensor) -> Tensor:
    """max(0, x); subgradient at 0 is 0."""
    x = as_tensor(x)
    mask = x.data > 0
    return record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    orig = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),), "reshape")


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.shape}")
    return record(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def tsum(x: Tensor) -> Tensor:
    """Full reduction to a scalar."""
    x = as_tensor(x)
    shape = x.shape
    return record(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean_last(x: Tensor) -> Tensor:
    """Mean over the last axis, e.g. [batch, ch, time] -> [batch, ch]."""
    x = as_tensor(x)
    n = x.shape[-1]

    def vjp(g: Array):
        return (np.repeat(np.expand_dims(g, -1), n, axis=-1) / n,)

    return record(x.data.mean(axis=-1), (x,), vjp, "mean_last")


def cosine_similarity_matrix(a: Tensor, b: Tensor, eps: float = 0.0) -> Tensor:
    """Pairwise cosine similarities: out[i, j] = <a_i, b_j> / (|a_i| |b_j|).

    With eps == 0 a zero-norm row aborts (a dead encoder should be loud);
    pass eps > 0 to clamp norms for inference robustness.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"cosine expects [m,d] and [n,d], got {a.shape}, {b.shape}")
    na = np.linalg.norm(a.data, axis=1)
    nb = np.linalg.norm(b.data, axis=1)
    if eps <= 0.0:
        for name, norms in (("left", na), ("right", nb)):
            if np.any(norms == 0.0):
                row = int(np.argmax(norms == 0.0))
                raise DegenerateInputError(
                    f"zero-norm {name} row {row} in cosine similarity; "
                    "the feature extractor emitted a dead vector"
                )
    else:
        na = np.maximum(na, eps)
        nb = np.maximum(nb, eps)
    an = a.data / na[:, None]
    bn = b.data / nb[:, None]
    s = an @ bn.T

    def vjp(g: Array):
        ga = (g @ bn - (g * s).sum(axis=1, keepdims=True) * an) / na[:, None]
        gb = (g.T @ an - (g * s).sum(axis=0)[:, None] * bn) / nb[:, None]
        return ga, gb

    return record(s, (a, b), vjp, "cosine")


def neg_sq_euclidean(a: Tensor, b: Tensor) -> Tensor:
    """out[i, j] = -|a_i - b_j|^2 (the Prototypical-form score)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"expected [m,d] and [n,d], got {a.shape}, {b.shape}")
    ad, bd = a.data, b.data
    sq_a = np.sum(ad * ad, axis=1)[:, None]
    sq_b = np.sum(bd * bd, axis=1)[None, :]
    out = -(sq_a + sq_b - 2.0 * ad @ bd.T)

    def vjp(g: Array):
        row = g.sum(axis=1)[:, None]
        col = g.sum(axis=0)[:, None]
        ga = -2.0 * (ad * row - g @ bd)
        gb = -2.0 * (bd * col - g.T @ ad)
        return ga, gb

    return record(out, (a, b), vjp, "neg_sq_euclidean")


def log_softmax(x: Tensor, axis: str = "row") -> Tensor:
    """Stable log-softmax along "row" (per sample) or "column" (per anchor)."""
    if axis not in _AXES:
        raise UsageError(f"axis must be 'row' or 'column', got {axis!r}")
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"log_softmax expects a matrix, got shape {x.shape}")
    ax = _AXES[axis]
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=ax, keepdims=True))
    out = shifted - logz
    p = np.exp(out)

    def vjp(g: Array):
        return (g - p * g.sum(axis=ax, keepdims=True),)

    return record(out, (x,), vjp, "log_softmax")


def kl_divergence(
    target_probs: Array | Tensor,
    predicted_log: Tensor,
    direction: str = "forward",
) -> Tensor:
    """Row-averaged KL divergence against a log-space prediction.

    forward: mean_i sum_j t_ij (log t_ij - p_ij)  with 0*log 0 = 0
    reverse: mean_i sum_j exp(p_ij) (p_ij - log t_ij), needs t > 0
    The target is a constant; only the prediction is differentiated.
    """
    t = target_probs.data if isinstance(target_probs, Tensor) else np.asarray(target_probs, dtype=np.float64)
    predicted_log = as_tensor(predicted_log)
    if t.shape != predicted_log.shape:
        raise DimensionError(f"target {t.shape} and prediction {predicted_log.shape} disagree")
    m = t.shape[0]
    p = predicted_log.data

    if direction == "forward":
        tlogt = np.where(t > 0.0, t * np.log(np.where(t > 0.0, t, 1.0)), 0.0)
        value = (tlogt - t * p).sum() / m
        gt = t / m

        def vjp(g: Array):
            return (-g * gt,)

    elif direction == "reverse":
        if np.any(t <= 0.0):
            raise UsageError("reverse KL needs strictly positive target probabilities")
        q = np.exp(p)
        diff = p - np.log(t)
        value = (q * diff).sum() / m

        def vjp(g: Array):
            return (g * q * (diff + 1.0) / m,)

    else:
        raise UsageError(f"direction must be 'forward' or 'reverse', got {direction!r}")
    return record(np.float64(value), (predicted_log,), vjp, "kl_divergence")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid cross-correlation over [batch, ch_in, time] with [ch_out, ch_in, k]."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 3 or weight.data.ndim != 3:
        raise DimensionError(f"conv1d expects rank-3 input/kernel, got {x.shape}, {weight.shape}")
    batch, c_in, length = x.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w or bias.shape != (c_out,):
        raise DimensionError(
            f"conv1d dims disagree: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    if k > length:
        raise DimensionError(f"kernel {k} longer than input {length}")
    l_out = (length - k) // stride + 1
    idx = np.arange(l_out)[:, None] * stride + np.arange(k)[None, :]
    patches = x.data[:, :, idx]  # [batch, c_in, l_out, k]
    out = np.einsum("bclk,ock->bol", patches, weight.data, optimize=True) + bias.data[None, :, None]
    xshape = x.shape

    def vjp(g: Array):
        gw = np.einsum("bol,bclk->ock", g, patches, optimize=True)
        gb = g.sum(axis=(0, 2))
        gpatches = np.einsum("bol,ock->bclk", g, weight.data, optimize=True)
        gx = np.zeros(xshape)
        np.add.at(gx, (slice(None), slice(None), idx), gpatches)
        return gx, gw, gb

    return record(out, (x, weight, bias), vjp, "conv1d")
