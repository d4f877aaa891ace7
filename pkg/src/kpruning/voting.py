"""Anchor voting: turn an anchor probability vector into a continuous value.

Probabilities are sorted descending (ties broken by ascending anchor
value), accumulated until the running sum reaches the threshold theta, and
the selected anchors vote with their own probabilities as weights:
o = sum(v_i * n_i) / sum(v_i). Classification simply takes the
best-scoring anchor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DataError, UsageError

_SUM_TOL = 1e-6


@dataclass
class VotingSet:
    """Descending (probability, value) pairs whose probabilities reached theta."""

    members: list[tuple[float, float]]

    @property
    def weight_sum(self) -> float:
        return float(sum(v for v, _ in self.members))

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class Prediction:
    value: float | str
    voting_set: VotingSet | None = None
    scores: np.ndarray | None = field(default=None, repr=False)


def _check_scores(scores) -> np.ndarray:
    probs = np.asarray(scores, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise DataError("scores must be a non-empty vector")
    if np.any(probs < -1e-12):
        raise DataError("scores must be non-negative probabilities")
    total = float(probs.sum())
    if abs(total - 1.0) > _SUM_TOL:
        raise DataError(f"scores must sum to 1 within {_SUM_TOL}, got {total}")
    return np.maximum(probs, 0.0)


def avs_predict(
    scores,
    values,
    theta: float = 0.9,
    include_boundary: bool = True,
) -> Prediction:
    """Weighted-mean vote over the smallest descending prefix reaching theta.

    include_boundary=False drops the element that crosses theta (sensitivity
    variant), always keeping at least the top anchor.
    """
    if not (0.0 < theta <= 1.0):
        raise UsageError(f"theta must be in (0, 1], got {theta}")
    probs = _check_scores(scores)
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != probs.shape:
        raise DataError("scores and values must align one-to-one")
    if not np.all(np.isfinite(vals)):
        raise DataError("anchor values must be finite")

    # primary key: probability descending; tie-break: value ascending
    order = np.lexsort((vals, -probs))
    sorted_p = probs[order]
    sorted_v = vals[order]
    cum = np.cumsum(sorted_p)
    reached = cum >= theta
    if reached.any():
        k = int(np.argmax(reached)) + 1
        if not include_boundary and k > 1:
            k -= 1
    else:
        k = probs.size  # rounding kept the sum below theta: vote with everything
    chosen_p = sorted_p[:k]
    chosen_v = sorted_v[:k]
    if k == 1:
        out = float(chosen_v[0])  # exact: a single voter contributes its own value
    else:
        weight = float(chosen_p.sum())
        if weight <= 0.0:
            raise DataError("voting set has zero total probability")
        out = float(np.dot(chosen_p, chosen_v) / weight)
    members = [(float(p), float(v)) for p, v in zip(chosen_p, chosen_v)]
    return Prediction(value=out, voting_set=VotingSet(members), scores=probs)


def avs_oracle(scores, values, theta: float = 0.9, include_boundary: bool = True) -> Prediction:
    """Brute-force reference: explicit sort, scan, and naive summation."""
    if not (0.0 < theta <= 1.0):
        raise UsageError(f"theta must be in (0, 1], got {theta}")
    probs = _check_scores(scores)
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != probs.shape:
        raise DataError("scores and values must align one-to-one")

    ranked = sorted(range(probs.size), key=lambda i: (-probs[i], vals[i]))
    members: list[tuple[float, float]] = []
    running = 0.0
    crossed = False
    for i in ranked:
        members.append((float(probs[i]), float(vals[i])))
        running = running + float(probs[i])
        if running >= theta:
            crossed = True
            break
    if crossed and not include_boundary and len(members) > 1:
        members.pop()
    if len(members) == 1:
        return Prediction(value=members[0][1], voting_set=VotingSet(members), scores=probs)
    num = 0.0
    den = 0.0
    for p, v in members:
        num += p * v
        den += p
    if den <= 0.0:
        raise DataError("voting set has zero total probability")
    return Prediction(value=num / den, voting_set=VotingSet(members), scores=probs)


def classify(scores, payloads: Sequence) -> Prediction:
    """Payload of the max-probability anchor; ties go to the lowest anchor id."""
    probs = _check_scores(scores)
    if len(payloads) != probs.size:
        raise DataError("scores and payloads must align one-to-one")
    best = int(np.argmax(probs))  # argmax returns the first (lowest id) maximum
    return Prediction(value=payloads[best], scores=probs)
