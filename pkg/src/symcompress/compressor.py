"""The full compression loop: cluster, reduce, repeat until the target support.

Strategy: while the support is far above the target, run coarse k-means
rounds (about one cluster per 2*C(m+k,k) supported points) and reduce every
cluster above the floor in place.  Once the support is within
switch_factor * target, switch to greedy rounds that find the smallest
(C(m+k,k)+1)-point cluster and reduce it, removing at least one point per
round.  Per-cluster moment preservation adds up to global preservation
because clusters touch disjoint weight indices.
"""

from __future__ import annotations

import heapq
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .caratheodory import MomentToleranceError, ReductionReport, reduce_support
from .clustering import _sq_dists, greedy_smallest_cluster, kmeans
from .moments import WeightedSet, moment_vector, n_basis
from .seeding import derive_seed
from .validation import check_order

__all__ = ["CompressionConfig", "compress", "compression_error"]


@dataclass
class CompressionConfig:
    """Knobs for `compress`.

    k: moment order to preserve.  target_size: desired support bound d'.
    tol: relative moment tolerance (per reduction and globally).
    switch_factor: greedy rounds begin once |supp| <= switch_factor * target.
    exact_nn: use the brute-force per-round cluster scan instead of the
    incrementally repaired tracker (slow; reference behaviour for tests).
    """

    k: int
    target_size: int
    tol: float = 1e-8
    switch_factor: float = 4.0
    seed: int = 0
    exact_nn: bool = False
    kmeans_max_iters: int = 50

    def __post_init__(self):
        check_order(self.k)
        if self.target_size < 1:
            raise ValueError(f"target_size must be >= 1, got {self.target_size}")
        if self.switch_factor < 1.0:
            raise ValueError(f"switch_factor must be >= 1, got {self.switch_factor}")
        if not (self.tol > 0.0):
            raise ValueError(f"tol must be positive, got {self.tol}")


class _SmallestClusterTracker:
    """Incrementally repaired candidate heap for the greedy rounds.

    Every active point is a candidate; its entry is the diameter of the
    cluster {candidate} + (size-1) nearest active neighbours.  Removing a
    point only changes entries whose cached cluster contained it, so those
    are the only ones recomputed.  Results match the brute-force rescan
    exactly on tie-free inputs.
    """

    _CHUNK = 256  # rows per vectorized repair block (memory cap)

    def __init__(self, points: np.ndarray, active: np.ndarray, size: int):
        self.points = points
        self.size = size
        self.active_mask = np.zeros(points.shape[0], dtype=bool)
        self.active_mask[active] = True
        self.n_active = int(active.size)
        self.version = np.zeros(points.shape[0], dtype=np.int64)
        self.members: dict[int, np.ndarray] = {}
        self.containing: defaultdict[int, set[int]] = defaultdict(set)
        self.heap: list[tuple[float, int, int]] = []
        act = np.flatnonzero(self.active_mask)
        self._push_many(act, act)

    def _push_many(self, cands: np.ndarray, act: np.ndarray) -> None:
        """Recompute entries for `cands`, batched; both arrays are sorted."""
        if self.n_active < self.size or cands.size == 0:
            return
        for start in range(0, cands.size, self._CHUNK):
            block = cands[start : start + self._CHUNK]
            d = np.sqrt(_sq_dists(self.points[block], self.points[act]))
            d[np.arange(block.size), np.searchsorted(act, block)] = np.inf
            nn = np.argpartition(d, self.size - 2, axis=1)[:, : self.size - 1]
            clusters = np.sort(np.concatenate([block[:, None], act[nn]], axis=1), axis=1)
            sub = self.points[clusters]
            sq = np.einsum("bim,bim->bi", sub, sub)
            g = sub @ sub.transpose(0, 2, 1)
            pair = np.maximum(sq[:, :, None] + sq[:, None, :] - 2.0 * g, 0.0)
            diams = np.sqrt(pair.max(axis=(1, 2)))
            for row in range(block.size):
                i = int(block[row])
                old = self.members.get(i)
                if old is not None:
                    for p in old:
                        self.containing[int(p)].discard(i)
                cluster = clusters[row]
                self.members[i] = cluster
                for p in cluster:
                    self.containing[int(p)].add(i)
                self.version[i] += 1
                heapq.heappush(self.heap, (float(diams[row]), i, int(self.version[i])))

    def best(self) -> np.ndarray:
        while self.heap:
            diam, i, ver = self.heap[0]
            if not self.active_mask[i] or ver != self.version[i]:
                heapq.heappop(self.heap)
                continue
            return self.members[i]
        raise RuntimeError("tracker exhausted; no cluster available")

    def remove(self, removed: np.ndarray) -> None:
        dirty: set[int] = set()
        for p in removed:
            p = int(p)
            self.active_mask[p] = False
            self.n_active -= 1
            self.version[p] += 1
            old = self.members.pop(p, None)
            if old is not None:
                for q in old:
                    self.containing[int(q)].discard(p)
            dirty.update(self.containing.pop(p, ()))
        act = np.flatnonzero(self.active_mask)
        cands = np.array(sorted(c for c in dirty if self.active_mask[c]), dtype=np.int64)
        self._push_many(cands, act)


def _round_seed(seed: int, round_idx: int) -> int:
    return derive_seed(seed, round_idx)


def compress(
    ws: WeightedSet,
    cfg: CompressionConfig,
    on_round=None,
) -> tuple[WeightedSet, ReductionReport]:
    """Reduce the support of `ws` to at most cfg.target_size points.

    Points never move; weights are reallocated so that every unnormalized
    moment up to order cfg.k is preserved to cfg.tol relative.  Reduction
    cannot push the support below C(m+k, k); if the target sits under that
    floor the call completes with `target_reached=False` on the report and
    the achieved support in `final_support` (a warning is issued up front).

    `on_round`, if given, is called as on_round(phase, support_size) after
    every round ("kmeans" or "greedy").  Deterministic given (ws, cfg).
    """
    bound = n_basis(ws.m, cfg.k)
    weights = ws.weights.copy()
    supp_count = int(np.count_nonzero(weights > 0.0))
    if supp_count == 0:
        raise ValueError("weighted set has empty support")
    if cfg.target_size < bound:
        warnings.warn(
            f"target_size {cfg.target_size} is below the support floor "
            f"C(m+k,k) = {bound}; compression will stop at the floor",
            stacklevel=2,
        )

    report = ReductionReport(
        iterations=0,
        initial_support=supp_count,
        final_support=supp_count,
        max_moment_residual=0.0,
    )
    if supp_count <= cfg.target_size:
        return ws.with_weights(weights), report

    before = moment_vector(ws, cfg.k).values
    iterations = 0
    size = bound + 1

    # Coarse phase: k-means rounds, one cluster per ~2*bound supported points.
    round_idx = 0
    while supp_count > cfg.target_size and supp_count > cfg.switch_factor * cfg.target_size:
        support = np.flatnonzero(weights > 0.0)
        q = max(1, math.ceil(supp_count / (2 * bound)))
        if q >= supp_count:
            break
        assignment = kmeans(
            ws.points[support],
            n_clusters=q,
            max_iters=cfg.kmeans_max_iters,
            seed=_round_seed(cfg.seed, round_idx),
        )
        round_idx += 1
        progress = False
        for cid in range(q):
            members = support[assignment.labels == cid]
            if members.size <= bound:
                continue
            sub = WeightedSet(ws.points[members], weights[members])
            reduced, rep = reduce_support(sub, cfg.k, cfg.tol)
            weights[members] = reduced.weights
            iterations += rep.iterations
            progress = True
        supp_count = int(np.count_nonzero(weights > 0.0))
        if on_round is not None:
            on_round("kmeans", supp_count)
        if not progress:
            break

    # Fine phase: greedy smallest-cluster rounds, at least one removal each.
    tracker: _SmallestClusterTracker | None = None
    if supp_count > cfg.target_size and supp_count >= size and not cfg.exact_nn:
        tracker = _SmallestClusterTracker(ws.points, np.flatnonzero(weights > 0.0), size)
    while supp_count > cfg.target_size and supp_count >= size:
        if cfg.exact_nn:
            support = np.flatnonzero(weights > 0.0)
            members = support[greedy_smallest_cluster(ws.points[support], size)]
        else:
            members = tracker.best()
        sub = WeightedSet(ws.points[members], weights[members])
        reduced, rep = reduce_support(sub, cfg.k, cfg.tol)
        weights[members] = reduced.weights
        iterations += rep.iterations
        removed = members[reduced.weights <= 0.0]
        supp_count -= int(removed.size)
        if tracker is not None:
            tracker.remove(removed)
        if on_round is not None:
            on_round("greedy", supp_count)

    after = moment_vector(ws.with_weights(weights), cfg.k).values
    residual = float(np.max(np.abs(after - before) / (1.0 + np.abs(before))))
    if residual > cfg.tol:
        raise MomentToleranceError(residual, cfg.tol)

    report.iterations = iterations
    report.final_support = supp_count
    report.max_moment_residual = residual
    report.target_reached = supp_count <= cfg.target_size
    return ws.with_weights(weights), report


def compression_error(ws: WeightedSet, ws_compressed: WeightedSet, f) -> float:
    """|f(ws) - f(ws_compressed)| for a symmetric-function handle f."""
    if ws.m != ws_compressed.m:
        raise ValueError("weighted sets must share the embedding dimension")
    return abs(f(ws) - f(ws_compressed))
