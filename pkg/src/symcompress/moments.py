"""Multi-index bookkeeping, monomial feature maps, and moment computation.

A weighted set {(c_j, w_j)} with w_j in R^m is summarized by its moments

    p_alpha = sum_j c_j * w_j^alpha,   |alpha| <= k,

indexed by multi-indices alpha in a fixed graded-lexicographic basis.  The
basis has exactly C(m+k, k) distinct monomials (symmetric tensor entries are
deduplicated), and the zero multi-index slot carries the total weight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .validation import check_order, check_points, check_weights

__all__ = [
    "n_basis",
    "multi_index_basis",
    "feature_map",
    "feature_matrix",
    "moment_vector",
    "WeightedSet",
    "MomentVector",
    "save_weighted_set_csv",
    "load_weighted_set_csv",
]

# Basis sizes must stay addressable as array dimensions.
_MAX_BASIS = np.iinfo(np.int64).max


def n_basis(m: int, k: int) -> int:
    """Number of monomials of degree <= k in m variables, C(m+k, k).

    This is both the moment-vector length and the support-size floor for
    moment-preserving reduction.  Refuses (rather than wraps) counts too
    large to index an array.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    count = math.comb(m + k, k)
    if count > _MAX_BASIS:
        raise OverflowError(f"basis size C({m + k},{k}) = {count} exceeds the int64 range")
    return count


def _compositions(total: int, parts: int):
    """Weak compositions of `total` into `parts` slots, first coordinate descending."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def multi_index_basis(m: int, k: int) -> list[tuple[int, ...]]:
    """Multi-indices of degree <= k in graded-lex order.

    Sorted by total degree ascending, then lexicographically on the exponent
    tuples (first coordinate dominant).  The first element is all zeros, so
    feature vectors always start with the constant monomial.

    >>> multi_index_basis(2, 1)
    [(0, 0), (1, 0), (0, 1)]
    """
    size = n_basis(m, k)
    basis: list[tuple[int, ...]] = []
    for degree in range(k + 1):
        basis.extend(_compositions(degree, m))
    assert len(basis) == size
    return basis


def feature_matrix(points: np.ndarray, basis: list[tuple[int, ...]]) -> np.ndarray:
    """Monomial features of many points at once.

    Returns the (n_basis, n_points) matrix whose column j is the feature
    vector of points[j]; this column layout is what the null-vector step of
    support reduction consumes.
    """
    pts = check_points(points)
    n_pts, m = pts.shape
    exps = np.asarray(basis, dtype=np.int64)
    if exps.ndim != 2 or exps.shape[1] != m:
        raise ValueError(f"basis dimension {exps.shape} does not match points with m={m}")
    k_max = int(exps.max()) if exps.size else 0
    out = np.ones((len(basis), n_pts))
    powers = np.arange(k_max + 1)[:, None]
    for a in range(m):
        # table[e, j] = pts[j, a] ** e; gather rows by exponent
        table = pts[:, a][None, :] ** powers
        out *= table[exps[:, a], :]
    return out


def feature_map(w, basis: list[tuple[int, ...]]) -> np.ndarray:
    """Monomial feature vector of a single point: entry i = prod_a w_a^alpha_{i,a}."""
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    return feature_matrix(w[None, :], basis)[:, 0]


@dataclass
class WeightedSet:
    """A finite weighted point set {(c_j, w_j)}: the compression substrate.

    `points` is (n, m) and is never mutated by compression; only `weights`
    (all nonnegative) are rearranged.  A uniformly weighted set has c_j = 1.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = check_points(self.points)
        self.weights = check_weights(self.weights, self.points.shape[0])

    @classmethod
    def uniform(cls, points) -> "WeightedSet":
        pts = check_points(points)
        return cls(pts, np.ones(pts.shape[0]))

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def support(self) -> np.ndarray:
        """Indices j with c_j > 0 (strictly)."""
        return np.flatnonzero(self.weights > 0.0)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights > 0.0))

    def total_weight(self) -> float:
        return math.fsum(self.weights)

    def restricted(self) -> "WeightedSet":
        """Copy containing only the supported points."""
        idx = self.support
        return WeightedSet(self.points[idx].copy(), self.weights[idx].copy())

    def with_weights(self, weights) -> "WeightedSet":
        """Same points, new weights (shares the points array)."""
        ws = WeightedSet.__new__(WeightedSet)
        ws.points = self.points
        ws.weights = check_weights(weights, self.points.shape[0])
        return ws


@dataclass
class MomentVector:
    """Moments p_alpha up to order k in the graded-lex basis.

    values[0] (the zero multi-index) is the total weight when unnormalized
    and exactly 1 when normalized.
    """

    m: int
    k: int
    normalized: bool
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (n_basis(self.m, self.k),):
            raise ValueError(
                f"values has shape {self.values.shape}, expected ({n_basis(self.m, self.k)},)"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "k": self.k,
                "normalized": self.normalized,
                "values": [float(v) for v in self.values],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MomentVector":
        obj = json.loads(text)
        return cls(
            m=int(obj["m"]),
            k=int(obj["k"]),
            normalized=bool(obj["normalized"]),
            values=np.asarray(obj["values"], dtype=np.float64),
        )


def moment_vector(ws: WeightedSet, k: int, normalized: bool = False) -> MomentVector:
    """Moments of a weighted set up to order k.

    Each entry is accumulated with exact compensated summation (math.fsum),
    so the result is independent of point order and duplicating a point is
    identical to doubling its weight.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    basis = multi_index_basis(ws.m, k)
    phi = feature_matrix(ws.points, basis)
    terms = phi * ws.weights[None, :]
    values = np.array([math.fsum(row) for row in terms])
    if normalized:
        total = math.fsum(ws.weights)
        if total <= 0.0:
            raise ValueError("normalized moments need total weight > 0")
        values = values / total
    return MomentVector(m=ws.m, k=k, normalized=normalized, values=values)


def save_weighted_set_csv(ws: WeightedSet, path) -> None:
    """Write `c,w_1,...,w_m` rows with 17-significant-digit floats (lossless)."""
    cols = ["c"] + [f"w_{i + 1}" for i in range(ws.m)]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(cols) + "\n")
        for c_j, row in zip(ws.weights, ws.points):
            fields = [f"{c_j:.17g}"] + [f"{v:.17g}" for v in row]
            fh.write(",".join(fields) + "\n")


def load_weighted_set_csv(path) -> WeightedSet:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "c" or any(
            name != f"w_{i + 1}" for i, name in enumerate(header[1:])
        ):
            raise ValueError(f"unrecognized weighted-set header: {header}")
        m = len(header) - 1
        if m < 1:
            raise ValueError("weighted-set CSV needs at least one coordinate column")
        weights = []
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != m + 1:
                raise ValueError(f"row has {len(parts)} fields, expected {m + 1}")
            weights.append(float(parts[0]))
            rows.append([float(p) for p in parts[1:]])
    if not rows:
        raise ValueError("weighted-set CSV contains no rows")
    return WeightedSet(np.asarray(rows), np.asarray(weights))
