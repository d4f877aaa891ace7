"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .exceptions import DataError


def check_windows_array(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 [n_samples, n_channels, length] array.

    2-D input is treated as single-channel windows.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise DataError(f"{name} must be [n_samples, n_channels, length], got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DataError(f"{name} has no samples")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains NaN or Inf")
    return arr


def check_target_length(X: np.ndarray, y) -> list:
    y_list = list(np.asarray(y).tolist()) if not isinstance(y, list) else list(y)
    if len(y_list) != X.shape[0]:
        raise DataError(f"y has {len(y_list)} entries for {X.shape[0]} samples")
    return y_list
