"""Clustering for the compression loop.

Two tools: seeded k-means for the coarse rounds (many clusters of roughly
twice the reduction floor), and a greedy search for the smallest cluster of a
given size (candidate point plus nearest neighbors, minimal diameter) for the
fine rounds near the target support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import check_points

__all__ = ["ClusterAssignment", "kmeans", "greedy_smallest_cluster", "pairwise_distances"]


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centers: np.ndarray
    n_clusters: int
    n_iters: int = 0
    # Inertia after each assignment step; non-increasing under Lloyd updates.
    inertia_path: list[float] = field(default_factory=list)


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n_points, n_centers), clipped at zero."""
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centers, centers)[None, :]
    d2 = p2 + c2 - 2.0 * points @ centers.T
    return np.maximum(d2, 0.0)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Full symmetric Euclidean distance matrix."""
    d2 = _sq_dists(points, points)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def _kmeanspp_seed(points: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: sample each next center with prob ∝ squared distance."""
    n = points.shape[0]
    centers = np.empty((n_clusters, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = _sq_dists(points, centers[:1])[:, 0]
    for i in range(1, n_clusters):
        total = closest.sum()
        if total <= 0.0:
            # All remaining points coincide with chosen centers.
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centers[i] = points[pick]
        d = _sq_dists(points, centers[i : i + 1])[:, 0]
        np.minimum(closest, d, out=closest)
    return centers


def kmeans(
    points: np.ndarray,
    n_clusters: int,
    max_iters: int = 100,
    seed: int = 0,
) -> ClusterAssignment:
    """Lloyd iterations from k-means++ seeding, deterministic given the seed.

    Empty clusters are re-seeded from the point farthest from its assigned
    center (one point per empty cluster, farthest first).  Stops when the
    labels no longer change or max_iters is reached.
    """
    points = check_points(points)
    n = points.shape[0]
    if n_clusters < 1:
        raise ValueError(f"n_clusters must be >= 1, got {n_clusters}")
    if n_clusters > n:
        raise ValueError(f"n_clusters = {n_clusters} exceeds the {n} points")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")

    rng = np.random.default_rng(seed)
    centers = _kmeanspp_seed(points, n_clusters, rng)

    labels = np.full(n, -1, dtype=np.int64)
    inertia_path: list[float] = []
    n_iters = 0
    for _ in range(max_iters):
        d2 = _sq_dists(points, centers)
        new_labels = np.argmin(d2, axis=1)
        inertia_path.append(float(d2[np.arange(n), new_labels].sum()))
        n_iters += 1
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

        own = d2[np.arange(n), labels]
        for cid in range(n_clusters):
            members = labels == cid
            if members.any():
                centers[cid] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(own))
                centers[cid] = points[far]
                own[far] = 0.0

    return ClusterAssignment(
        labels=labels,
        centers=centers,
        n_clusters=n_clusters,
        n_iters=n_iters,
        inertia_path=inertia_path,
    )


def greedy_smallest_cluster(points: np.ndarray, size: int, seed: int = 0) -> np.ndarray:
    """Indices of an (approximately) smallest-diameter cluster of `size` points.

    For every candidate point, its size-1 nearest neighbors are gathered and
    the diameter (max pairwise distance) of the resulting set is measured;
    the best candidate set wins, lowest candidate index on ties.  This is the
    exact brute-force reference; the compressor keeps an incrementally
    repaired equivalent for long runs.  `seed` is accepted for interface
    stability but unused (the scan is deterministic).
    """
    del seed
    points = check_points(points)
    n = points.shape[0]
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    if n < size:
        raise ValueError(f"need at least {size} points, got {n}")
    if n == size:
        return np.arange(n)

    dist = pairwise_distances(points)
    np.fill_diagonal(dist, np.inf)
    best_diam = np.inf
    best: np.ndarray | None = None
    for i in range(n):
        nn = np.argpartition(dist[i], size - 2)[: size - 1] if size > 1 else np.array([], dtype=int)
        cluster = np.concatenate(([i], nn))
        sub = dist[np.ix_(cluster, cluster)].copy()
        np.fill_diagonal(sub, 0.0)
        diam = float(sub.max())
        if diam < best_diam:
            best_diam = diam
            best = cluster
    assert best is not None
    return np.sort(best)
