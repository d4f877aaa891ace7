"""The anchor-distillation objective.

Anchors are projected into the target feature space by a two-affine-layer
alignment map, scored against batch features, turned into a row (per
sample, over anchors) and a column (per anchor, over samples) log
distribution, and pulled toward a temperature-sharpened one-hot target
with a symmetric 0.5/0.5 KL loss. Gradients flow through both the feature
extractor and the alignment map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import AnchorSet
from .exceptions import DimensionError, UsageError
from .nn import AffineLayer, Tensor, ops


class AlignmentModule:
    """Two affine layers with a ReLU between: anchor dim D -> hidden H -> feature dim F."""

    def __init__(self, anchor_dim: int, feature_dim: int, hidden: int | None = None,
                 rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        hidden = feature_dim if hidden is None else hidden
        self.layer1 = AffineLayer(anchor_dim, hidden, rng)
        self.layer2 = AffineLayer(hidden, feature_dim, rng)

    @property
    def anchor_dim(self) -> int:
        return self.layer1.in_dim

    @property
    def feature_dim(self) -> int:
        return self.layer2.out_dim

    def __call__(self, z: Tensor) -> Tensor:
        return self.layer2(ops.relu(self.layer1(z)))

    def parameters(self) -> list[Tensor]:
        return self.layer1.parameters() + self.layer2.parameters()

    def n_params(self) -> int:
        return self.layer1.n_params() + self.layer2.n_params()


def align_anchors(phi: AlignmentModule, anchor_set: AnchorSet | np.ndarray) -> Tensor:
    """Project every anchor embedding into the target feature space."""
    mat = anchor_set.matrix() if isinstance(anchor_set, AnchorSet) else np.asarray(anchor_set)
    if mat.ndim != 2 or mat.shape[1] != phi.anchor_dim:
        raise DimensionError(
            f"anchor matrix {mat.shape} does not match alignment input dim {phi.anchor_dim}"
        )
    return phi(Tensor(mat))


def score(features: Tensor, aligned: Tensor, mode: str = "cosine",
          logit_scale: float = 1.0, eps: float = 0.0) -> Tensor:
    """Batch-by-anchor score matrix: cosine similarity or -squared distance."""
    if mode == "cosine":
        s = ops.cosine_similarity_matrix(features, aligned, eps=eps)
    elif mode == "neg_euclidean":
        s = ops.neg_sq_euclidean(features, aligned)
    else:
        raise UsageError(f"mode must be cosine or neg_euclidean, got {mode!r}")
    if logit_scale != 1.0:
        s = ops.scale(s, logit_scale)
    return s


@dataclass
class DistributionPair:
    """p_t: per-sample log distribution over anchors (rows of exp sum to 1).
    p_l: per-anchor log distribution over samples (columns of exp sum to 1)."""

    p_t: Tensor
    p_l: Tensor


def bidirectional_distributions(scores: Tensor) -> DistributionPair:
    return DistributionPair(
        p_t=ops.log_softmax(scores, axis="row"),
        p_l=ops.log_softmax(scores, axis="column"),
    )


@dataclass
class TargetDistribution:
    p_g_row: np.ndarray  # rows are probability vectors over anchors
    p_g_col: np.ndarray  # columns are probability vectors over samples
    tau: float


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def target_distribution(assignments: np.ndarray, n_anchors: int, tau: float) -> TargetDistribution:
    """Temperature-sharpened targets from the one-hot sample->anchor matrix.

    G[b, assignments[b]] = 1; the row target softmaxes tau*G over anchors,
    the column target softmaxes tau*G over samples. A column holding several
    assigned samples spreads its mass equally over them.
    """
    if tau <= 0:
        raise UsageError(f"tau must be positive, got {tau}")
    assignments = np.asarray(assignments, dtype=np.intp)
    if assignments.ndim != 1 or assignments.size == 0:
        raise UsageError("assignments must be a non-empty vector of anchor indices")
    if assignments.min() < 0 or assignments.max() >= n_anchors:
        raise UsageError("assignment index out of range")
    g = np.zeros((assignments.size, n_anchors))
    g[np.arange(assignments.size), assignments] = 1.0
    return TargetDistribution(
        p_g_row=_softmax(tau * g, axis=1),
        p_g_col=_softmax(tau * g, axis=0),
        tau=float(tau),
    )


def kp_loss(pair: DistributionPair, targets: TargetDistribution,
            kl_direction: str = "forward") -> Tensor:
    """0.5 * KL over rows (anchors axis) + 0.5 * KL over columns (batch axis)."""
    if pair.p_t.shape != targets.p_g_row.shape or pair.p_l.shape != targets.p_g_col.shape:
        raise DimensionError("distribution and target shapes disagree")
    row_term = ops.kl_divergence(targets.p_g_row, pair.p_t, direction=kl_direction)
    col_term = ops.kl_divergence(
        targets.p_g_col.T, ops.transpose(pair.p_l), direction=kl_direction
    )
    return ops.add(ops.scale(row_term, 0.5), ops.scale(col_term, 0.5))
