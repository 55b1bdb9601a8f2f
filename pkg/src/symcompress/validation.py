"""Input validation helpers shared by the functional core and the estimator."""

from __future__ import annotations

import numpy as np

__all__ = ["check_points", "check_weights", "check_order", "as_float_array"]


def as_float_array(a, name: str = "array") -> np.ndarray:
    """Coerce to a C-contiguous float64 array, rejecting non-finite entries."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    return out


def check_points(points, name: str = "points") -> np.ndarray:
    """Validate a 2-d (n_points, n_dims) coordinate array."""
    pts = as_float_array(points, name)
    if pts.ndim != 2:
        raise ValueError(f"{name} must be 2-d (n_points, n_dims), got shape {pts.shape}")
    if pts.shape[1] < 1:
        raise ValueError(f"{name} must have at least one coordinate")
    return pts


def check_weights(weights, n_points: int, name: str = "weights") -> np.ndarray:
    """Validate a nonnegative weight vector of length ``n_points``."""
    w = as_float_array(weights, name)
    if w.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {w.shape}")
    if w.shape[0] != n_points:
        raise ValueError(f"{name} has length {w.shape[0]}, expected {n_points}")
    if np.any(w < 0.0):
        raise ValueError(f"{name} must be nonnegative")
    return w


def check_order(k: int, name: str = "k") -> int:
    """Validate a moment order (positive integer)."""
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise TypeError(f"{name} must be an integer, got {type(k).__name__}")
    if k < 1:
        raise ValueError(f"{name} must be >= 1, got {k}")
    return int(k)
