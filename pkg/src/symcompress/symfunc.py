"""Reference symmetric functions for measuring compression error.

The workhorse is a ten-probe sigmoid average: f = (1/sum c) * sum_j c_j *
(1/n_probe) * sum_a sigmoid(<w_j, x_a>).  It is permutation invariant and
smooth, so its value under compression tracks the moment error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moments import WeightedSet

__all__ = ["ProbeFunction", "make_probes", "eval_probe", "sigmoid"]


def sigmoid(t: np.ndarray) -> np.ndarray:
    """Overflow-safe logistic function."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class ProbeFunction:
    """A fixed set of probe directions; callable on weighted sets."""

    probes: np.ndarray

    def __post_init__(self):
        self.probes = np.ascontiguousarray(self.probes, dtype=np.float64)
        if self.probes.ndim != 2:
            raise ValueError("probes must be (n_probe, m)")

    @property
    def m(self) -> int:
        return self.probes.shape[1]

    @property
    def n_probe(self) -> int:
        return self.probes.shape[0]

    def __call__(self, ws: WeightedSet) -> float:
        return eval_probe(ws, self)


def make_probes(m: int, n_probe: int = 10, seed: int = 0) -> ProbeFunction:
    """n_probe iid standard-normal probe vectors in R^m, seeded."""
    if n_probe < 1:
        raise ValueError(f"n_probe must be >= 1, got {n_probe}")
    rng = np.random.default_rng(seed)
    return ProbeFunction(rng.standard_normal((n_probe, m)))


def eval_probe(ws: WeightedSet, pf: ProbeFunction) -> float:
    """Weighted probe average; exact compensated summation over points.

    Always in (0, 1); invariant under permutation of the (c, w) pairs and
    under splitting a weight across duplicate points.
    """
    if pf.m != ws.m:
        raise ValueError(f"probe dimension {pf.m} does not match set dimension {ws.m}")
    total = math.fsum(ws.weights)
    if total <= 0.0:
        raise ValueError("eval_probe needs total weight > 0")
    per_point = sigmoid(ws.points @ pf.probes.T).mean(axis=1)
    return math.fsum(ws.weights * per_point) / total
