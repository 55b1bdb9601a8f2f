"""Synthetic regression datasets, special functions, and the weighted sampler.

Two tasks back the experiments: a teacher-student problem (labels from a
random width-50 ReLU net plus Gaussian noise) and fitting the oscillatory
cylindrical harmonic J_6(20r) cos(6 theta).  A LabeledDataset doubles as a
weighted point set by joining features and label per row, which is what the
dataset-compression pipeline operates on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moments import WeightedSet
from .nn import TwoLayerNet, forward, init_net
from .seeding import derive_seed
from .validation import as_float_array

__all__ = [
    "LabeledDataset",
    "make_teacher_student",
    "make_harmonic_dataset",
    "bessel_j",
    "cylindrical_harmonic",
    "weighted_minibatch",
    "save_dataset_csv",
    "load_dataset_csv",
    "save_dataset_binary",
    "load_dataset_binary",
]

BESSEL_MAX_ORDER = 20
BESSEL_MAX_X = 64.0


@dataclass
class LabeledDataset:
    """Rows of (x in R^in_dim, scalar y), optionally weighted."""

    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.X = as_float_array(self.X, "X")
        self.y = as_float_array(self.y, "y")
        if self.X.ndim != 2:
            raise ValueError("X must be 2-d (n, in_dim)")
        if self.y.ndim != 1 or self.y.shape[0] != self.X.shape[0]:
            raise ValueError("y must be 1-d with one label per row of X")
        if self.weights is not None:
            self.weights = as_float_array(self.weights, "weights")
            if self.weights.shape != (self.X.shape[0],):
                raise ValueError("weights must be 1-d with one entry per row")
            if np.any(self.weights < 0.0):
                raise ValueError("weights must be nonnegative")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def in_dim(self) -> int:
        return self.X.shape[1]

    def effective_weights(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    def as_weighted_set(self) -> WeightedSet:
        """Point = concat(x, y); compression then preserves joint moments."""
        return WeightedSet(np.hstack([self.X, self.y[:, None]]), self.effective_weights())

    @classmethod
    def from_weighted_set(cls, ws: WeightedSet) -> "LabeledDataset":
        if ws.m < 2:
            raise ValueError("need at least one feature column plus the label")
        return cls(ws.points[:, :-1].copy(), ws.points[:, -1].copy(), ws.weights.copy())

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        idx = np.asarray(idx)
        w = None if self.weights is None else self.weights[idx].copy()
        return LabeledDataset(self.X[idx].copy(), self.y[idx].copy(), w)


def make_teacher_student(d: int, seed: int, noise_sd: float = 3.0):
    """Teacher-student data: x ~ U[-1,1]^2, y = teacher(x) + N(0, noise_sd^2).

    The teacher is a width-50 ReLU net with the standard uniform dense init,
    drawn from a child seed, so the same seed always yields the same
    (dataset, teacher) pair.  Returns (LabeledDataset, teacher net).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    teacher = init_net(2, 50, 1, activation="relu", seed=derive_seed(seed, 0))
    x = np.random.default_rng(derive_seed(seed, 1)).uniform(-1.0, 1.0, size=(d, 2))
    y = forward(teacher, x)[:, 0]
    if noise_sd > 0.0:
        y = y + np.random.default_rng(derive_seed(seed, 2)).normal(0.0, noise_sd, size=d)
    return LabeledDataset(x, y), teacher


def make_harmonic_dataset(d: int, seed: int, noise_sd: float = 0.2) -> LabeledDataset:
    """Noisy samples of the cylindrical harmonic on the unit square."""
    if d < 1:
        raise ValueError("d must be >= 1")
    x = np.random.default_rng(derive_seed(seed, 1)).uniform(-1.0, 1.0, size=(d, 2))
    y = cylindrical_harmonic(x[:, 0], x[:, 1])
    if noise_sd > 0.0:
        y = y + np.random.default_rng(derive_seed(seed, 2)).normal(0.0, noise_sd, size=d)
    return LabeledDataset(x, y)


def _bessel_j_batch(n: int, x: np.ndarray) -> np.ndarray:
    """J_n on an array of x >= 0 by Miller's downward recurrence.

    Start well above the largest order needed, recurse down with a throwaway
    scale, and normalize with J_0 + 2 sum_k J_2k = 1.  Elements are rescaled
    whenever the unnormalized iterates grow past 1e250, keeping the
    recurrence finite without changing any final ratio.
    """
    out = np.empty_like(x)
    zero = x == 0.0
    out[zero] = 1.0 if n == 0 else 0.0
    # Ascending series for tiny arguments, where the downward multipliers
    # 2m/x would overflow long before the rescaling check could catch them.
    tiny = (~zero) & (x < 1e-6)
    if np.any(tiny):
        xh = 0.5 * x[tiny]
        lead = xh**n / math.factorial(n)
        out[tiny] = lead * (1.0 - xh**2 / (n + 1) + xh**4 / (2.0 * (n + 1) * (n + 2)))
    xs = x[~zero & ~tiny]
    if xs.size == 0:
        return out

    x_max = float(xs.max())
    # The downward iterates only decay once the order exceeds the argument,
    # so the safety margin must sit on top of max(n, x), not n alone.
    n_start = max(n, math.ceil(x_max)) + 20 + math.ceil(math.sqrt(40.0 * x_max))
    jp = np.zeros_like(xs)  # order m+1
    jc = np.full_like(xs, 1e-30)  # order m
    norm = np.zeros_like(xs)  # accumulates j_0 + 2 sum j_{2k}
    target = np.zeros_like(xs)
    if n_start % 2 == 0:
        norm += 2.0 * jc
    for m in range(n_start, 0, -1):
        jm = (2.0 * m / xs) * jc - jp
        jp = jc
        jc = jm
        order = m - 1
        if order == n:
            target = jc.copy()
        if order == 0:
            norm += jc
        elif order % 2 == 0:
            norm += 2.0 * jc
        big = np.abs(jc) > 1e250
        if np.any(big):
            jc[big] *= 1e-250
            jp[big] *= 1e-250
            norm[big] *= 1e-250
            target[big] *= 1e-250
    out[~zero & ~tiny] = target / norm
    return out


def bessel_j(n: int, x):
    """Bessel function of the first kind, 0 <= n <= 20, 0 <= x <= 64.

    Accurate to about 1e-10 absolute on the stated domain; scalar in, scalar
    out, with array x accepted element-wise.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise TypeError("order n must be an integer")
    if not 0 <= n <= BESSEL_MAX_ORDER:
        raise ValueError(f"order must be in [0, {BESSEL_MAX_ORDER}], got {n}")
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("x must be finite")
    if np.any(arr < 0.0) or np.any(arr > BESSEL_MAX_X):
        raise ValueError(f"x must be in [0, {BESSEL_MAX_X}]")
    result = _bessel_j_batch(int(n), np.atleast_1d(arr))
    return float(result[0]) if arr.ndim == 0 else result.reshape(arr.shape)


def cylindrical_harmonic(x1, x2):
    """J_6(20 r) cos(6 theta) in the polar coordinates of (x1, x2).

    Zero at the origin since J_6(0) = 0.  Defined for r <= 3.2 (the Bessel
    argument cap); experiment inputs live in [-1, 1]^2.
    """
    a1 = np.asarray(x1, dtype=np.float64)
    a2 = np.asarray(x2, dtype=np.float64)
    r = np.hypot(a1, a2)
    theta = np.arctan2(a2, a1)
    values = np.asarray(bessel_j(6, 20.0 * r) * np.cos(6.0 * theta))
    return float(values) if values.ndim == 0 else values


def weighted_minibatch(obj, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """batch_size indices drawn i.i.d. with P(j) proportional to weight j.

    `obj` is a WeightedSet or LabeledDataset (anything with .n and .weights;
    weights None means uniform).  The caller's rng advances in place, so a
    single rng yields a deterministic trajectory of batches.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = obj.n
    weights = getattr(obj, "weights", None)
    if weights is None:
        prob = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        total = weights.sum()
        if total <= 0.0:
            raise ValueError("weights sum to zero; nothing to sample")
        prob = weights / total
    return rng.choice(n, size=batch_size, replace=True, p=prob)


def save_dataset_csv(ds: LabeledDataset, path) -> None:
    """Header x_1,...,x_in,y[,c]; 17 significant digits; c only if weighted."""
    cols = [f"x_{i + 1}" for i in range(ds.in_dim)] + ["y"]
    table = np.hstack([ds.X, ds.y[:, None]])
    if ds.weights is not None:
        cols.append("c")
        table = np.hstack([table, ds.weights[:, None]])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_dataset_csv(path) -> LabeledDataset:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        has_c = header and header[-1] == "c"
        body = header[:-1] if has_c else header
        if body[-1:] != ["y"] or body[:-1] != [f"x_{i + 1}" for i in range(len(body) - 1)]:
            raise ValueError(f"unrecognized dataset header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    width = len(header)
    if any(len(r) != width for r in rows):
        raise ValueError("ragged dataset rows")
    table = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    in_dim = len(body) - 1
    weights = table[:, -1] if has_c else None
    return LabeledDataset(table[:, :in_dim], table[:, in_dim], weights)


def save_dataset_binary(ds: LabeledDataset, stem) -> None:
    """`<stem>.json` header plus `<stem>.bin` little-endian float64 X,y[,c]."""
    import json

    header = {"n": ds.n, "in_dim": ds.in_dim, "weighted": ds.weights is not None}
    with open(f"{stem}.json", "w", encoding="ascii") as fh:
        json.dump(header, fh)
        fh.write("\n")
    parts = [ds.X, ds.y] + ([ds.weights] if ds.weights is not None else [])
    blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in parts)
    with open(f"{stem}.bin", "wb") as fh:
        fh.write(blob)


def load_dataset_binary(stem) -> LabeledDataset:
    import json

    with open(f"{stem}.json", "r", encoding="ascii") as fh:
        header = json.load(fh)
    n, in_dim = int(header["n"]), int(header["in_dim"])
    weighted = bool(header["weighted"])
    raw = np.fromfile(f"{stem}.bin", dtype="<f8")
    expected = n * in_dim + n + (n if weighted else 0)
    if raw.size != expected:
        raise ValueError(f"binary dataset holds {raw.size} floats, expected {expected}")
    x = raw[: n * in_dim].reshape(n, in_dim).astype(np.float64)
    y = raw[n * in_dim : n * in_dim + n].astype(np.float64)
    w = raw[n * in_dim + n :].astype(np.float64) if weighted else None
    return LabeledDataset(x, y, w)
