"""Support reduction of weighted sets by null-vector weight peeling.

Any weighted set in R^m has a reweighting with at most C(m+k, k) supported
points and identical moments up to order k.  The constructive loop: build the
monomial feature matrix A over the supported points, find a null vector v of
A, and move the weights along v until the first one hits zero.  Moments are
untouched because A (c - t v) = A c, nonnegativity because t stops at the
first zero crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moments import WeightedSet, feature_matrix, multi_index_basis, n_basis
from .validation import check_order

__all__ = [
    "MomentToleranceError",
    "ReductionReport",
    "null_vector",
    "reduce_support",
]


class MomentToleranceError(RuntimeError):
    """Moment residual after a reduction exceeded the requested tolerance."""

    def __init__(self, residual: float, tol: float):
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"moment residual {residual:.3e} exceeds tolerance {tol:.3e} "
            "(conditioning failure)"
        )


@dataclass
class ReductionReport:
    """Accounting for one reduction (or one full compression).

    `iterations` counts null-vector steps; each zeroes at least one weight,
    so iterations <= initial_support - final_support, with equality unless a
    tie zeroed several weights at once.  `max_moment_residual` is the largest
    relative raw-moment deviation |p' - p| / (1 + |p|) over the basis.
    `target_reached` is False when a compression stopped short of its target
    support (the support floor was hit); the achieved support is
    `final_support`.
    """

    iterations: int
    initial_support: int
    final_support: int
    max_moment_residual: float
    target_reached: bool = True


def null_vector(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Unit-norm v with A v = 0 (rows < cols required).

    Any null vector serves the weight-peeling step, so for cols > rows + 1
    the search is restricted to the leading rows + 1 columns (zero elsewhere),
    keeping each step O(rows^3) regardless of support size.  The vector comes
    from the complete QR of A^T, whose trailing column is orthogonal to the
    row space; an SVD retry covers the rare ill-conditioned case.  The sign
    is deterministic: the component of largest magnitude is made positive
    (ties broken by lowest index), which also guarantees at least one
    strictly positive entry.

    Raises RuntimeError if ||A v|| > tol * ||A||_F even after the retry,
    which cannot happen for a healthy solver since cols > rows forces a
    genuine null space.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("A must be a matrix")
    rows, cols = A.shape
    if cols <= rows:
        raise ValueError(f"need cols > rows for a guaranteed null vector, got {A.shape}")
    cap = rows + 1
    if cols > cap:
        v = np.zeros(cols)
        v[:cap] = null_vector(A[:, :cap], tol)
        return v
    q, _ = np.linalg.qr(A.T, mode="complete")
    v = q[:, -1]
    bound = tol * float(np.linalg.norm(A, "fro"))
    if float(np.linalg.norm(A @ v)) > bound:
        _, _, vt = np.linalg.svd(A, full_matrices=True)
        v = vt[-1]
        residual = float(np.linalg.norm(A @ v))
        if residual > bound:
            raise RuntimeError(
                f"null-vector residual {residual:.3e} exceeds {bound:.3e}; "
                "the factorization failed to expose the null space"
            )
    pivot = int(np.argmax(np.abs(v)))
    if v[pivot] < 0.0:
        v = -v
    return v


def _raw_moments(phi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Exactly summed moments for a fixed feature matrix."""
    terms = phi * weights[None, :]
    return np.array([math.fsum(row) for row in terms])


def _relative_residual(before: np.ndarray, after: np.ndarray) -> float:
    return float(np.max(np.abs(after - before) / (1.0 + np.abs(before))))


def _centered(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Shift by the weighted centroid and scale by the max norm.

    Raw monomials of moderate order at offset centroids are catastrophically
    ill-conditioned; the centered-scaled monomials span the same polynomial
    space, so preserving their moments preserves the raw ones.
    """
    total = weights.sum()
    centroid = (weights @ points) / total
    shifted = points - centroid
    scale = float(np.max(np.linalg.norm(shifted, axis=1)))
    if scale <= 0.0:
        scale = 1.0
    return shifted / scale


def reduce_support(
    ws: WeightedSet,
    k: int,
    tol: float = 1e-8,
    on_iteration=None,
) -> tuple[WeightedSet, ReductionReport]:
    """Reduce |support| to at most C(m+k, k) while preserving moments to order k.

    Points never move; only weights are rearranged, staying nonnegative after
    every single iteration.  Each iteration finds a null vector v of the
    feature matrix over the supported points (in centered-scaled
    coordinates), steps the weights by t = min_{v_j > 0} c_j / v_j, and
    zeroes every index attaining the minimum.

    `on_iteration`, if given, is called with a copy of the full weight vector
    after every iteration (test hook).

    Raises MomentToleranceError if the raw moments drift beyond `tol`
    relative, measured as max_alpha |p'_alpha - p_alpha| / (1 + |p_alpha|).
    """
    k = check_order(k)
    bound = n_basis(ws.m, k)
    basis = multi_index_basis(ws.m, k)

    weights = ws.weights.copy()
    support = np.flatnonzero(weights > 0.0)
    initial_support = support.size

    report = ReductionReport(
        iterations=0,
        initial_support=initial_support,
        final_support=initial_support,
        max_moment_residual=0.0,
    )
    if initial_support <= bound:
        return ws.with_weights(weights), report

    phi_raw = feature_matrix(ws.points[support], basis)
    before = _raw_moments(phi_raw, weights[support])

    # Feature columns in centered coordinates, fixed for the whole reduction.
    phi = feature_matrix(_centered(ws.points[support], weights[support]), basis)

    alive = np.ones(support.size, dtype=bool)
    c = weights[support]
    iterations = 0
    while int(alive.sum()) > bound:
        idx = np.flatnonzero(alive)
        v = null_vector(phi[:, idx])
        pos = v > 0.0
        ratios = c[idx[pos]] / v[pos]
        t = ratios.min()
        c[idx] = c[idx] - t * v
        # Zero every index attaining the minimum, then clear float dust.
        zeroed = idx[pos][ratios == t]
        c[zeroed] = 0.0
        np.maximum(c, 0.0, out=c)
        alive[idx] = c[idx] > 0.0
        iterations += 1
        if on_iteration is not None:
            snapshot = weights.copy()
            snapshot[support] = c
            on_iteration(snapshot)

    weights[support] = c
    after = _raw_moments(phi_raw, c)
    residual = _relative_residual(before, after)
    if residual > tol:
        raise MomentToleranceError(residual, tol)

    report.iterations = iterations
    report.final_support = int(np.count_nonzero(weights > 0.0))
    report.max_moment_residual = residual
    return ws.with_weights(weights), report
