"""Dense float64 tensors with a reverse-mode operation tape.

A ``Tensor`` wraps a numpy array (rank 0-3). Every differentiable
operation records a ``TapeEntry`` on the result; ``Tape.trace`` collects
the entries reachable from a result in execution order, and replaying
them backward accumulates gradients into every ``requires_grad`` leaf.

Tapes and their tensors are single-worker objects: nothing here locks,
and one backward pass walks one graph.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ..exceptions import DimensionError, UsageError

Array = np.ndarray

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Suspend taping inside the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class TapeEntry:
    """One executed operation: its inputs and the vector-Jacobian product."""

    __slots__ = ("output", "inputs", "vjp", "name")

    def __init__(
        self,
        output: "Tensor",
        inputs: Sequence["Tensor"],
        vjp: Callable[[Array], Sequence[Array | None]],
        name: str,
    ) -> None:
        self.output = output
        self.inputs = tuple(inputs)
        self.vjp = vjp
        self.name = name


class Tensor:
    """A dense float64 array plus the op record that produced it."""

    __slots__ = ("data", "requires_grad", "grad", "entry")

    def __init__(self, data, requires_grad: bool = False) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 3:
            raise DimensionError(f"tensors are rank 0-3, got rank {arr.ndim}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self.entry: TapeEntry | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def record(
    out_data: Array,
    inputs: Sequence[Tensor],
    vjp: Callable[[Array], Sequence[Array | None]],
    name: str,
) -> Tensor:
    """Build the result tensor of an op, taping it when a gradient is needed."""
    out = Tensor(out_data)
    if _GRAD_ENABLED and any(t.requires_grad or t.entry is not None for t in inputs):
        out.requires_grad = True
        out.entry = TapeEntry(out, inputs, vjp, name)
    return out


class Tape:
    """Execution-ordered record of the operations behind one result tensor."""

    def __init__(self, entries: Sequence[TapeEntry]) -> None:
        self.entries = list(entries)

    @classmethod
    def trace(cls, result: Tensor) -> "Tape":
        entries: list[TapeEntry] = []
        seen: set[int] = set()

        def visit(t: Tensor) -> None:
            if t.entry is None or id(t) in seen:
                return
            seen.add(id(t))
            for parent in t.entry.inputs:
                visit(parent)
            entries.append(t.entry)

        visit(result)
        return cls(entries)

    def replay_backward(self, seed: Array) -> dict[int, Array]:
        """Walk the tape in reverse, chaining vjps; returns grads by tensor id."""
        grads: dict[int, Array] = {id(self.entries[-1].output): np.asarray(seed)}
        for entry in reversed(self.entries):
            g_out = grads.get(id(entry.output))
            if g_out is None:
                continue
            for parent, g in zip(entry.inputs, entry.vjp(g_out)):
                if g is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        return grads


def backward(loss: Tensor) -> dict[Tensor, Array]:
    """Populate ``.grad`` for every requires_grad tensor reachable from ``loss``.

    Returns the gradient map {tensor: gradient}. Gradients accumulate
    additively when a tensor feeds several operations; the gradient of the
    loss with respect to itself is 1.
    """
    if loss.data.ndim != 0:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.entry is None:
        raise UsageError("backward on a detached tensor: no operations were taped")
    tape = Tape.trace(loss)
    grads = tape.replay_backward(np.float64(1.0))

    gradient_map: dict[Tensor, Array] = {}
    seen: set[int] = set()

    def collect(t: Tensor) -> None:
        if id(t) in seen:
            return
        seen.add(id(t))
        if t.requires_grad:
            g = grads.get(id(t))
            if g is None:
                g = np.zeros_like(t.data)
            g = np.asarray(g, dtype=np.float64)
            t.grad = g if t.grad is None else t.grad + g
            gradient_map[t] = g
        if t.entry is not None:
            for parent in t.entry.inputs:
                collect(parent)

    collect(loss)
    return gradient_map


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
