"""Generalized k-means on a precomputed pairwise-distance matrix.

The cost of an assignment is the sum, over points, of the average distance
to the point's cluster mates (halved), which for squared Euclidean distances
coincides with the classical within-cluster sum of squares. Optimization is
a local search over single-point relabelings with exact incremental cost
deltas, restarted from several random assignments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass
class ClusterAssignment:
    """Per-point cluster labels in {0..k-1} plus the assignment cost."""

    labels: np.ndarray
    k: int
    cost: float

    def to_csv(self) -> str:
        lines = ["point,cluster"]
        lines += [f"{i},{int(c)}" for i, c in enumerate(self.labels)]
        return "\n".join(lines) + "\n"


def counting(theta: ClusterAssignment, i: int) -> int:
    """Number of points sharing point i's cluster, including i itself."""
    labels = np.asarray(theta.labels)
    if not 0 <= i < len(labels):
        raise InputError(f"index {i} out of range for {len(labels)} points")
    return int(np.sum(labels == labels[i]))


def _check_dist(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise InputError(f"distance matrix must be square, got {dist.shape}")
    if not np.allclose(dist, dist.T, atol=1e-9):
        raise InputError("distance matrix must be symmetric")
    if np.any(np.abs(np.diagonal(dist)) > 1e-12):
        raise InputError("distance matrix must have a zero diagonal")
    if np.any(dist < 0):
        raise InputError("distance matrix must be nonnegative")
    return dist


def cost_of(theta: ClusterAssignment | np.ndarray, dist: np.ndarray, squared: bool = False) -> float:
    """Assignment cost: sum over same-cluster (i, j) of d(i, j) / (2 K_i).

    With squared=True the entries are squared first; on Euclidean data this
    makes the value equal the within-cluster sum of squared distances to the
    cluster centroids.
    """
    labels = np.asarray(theta.labels if isinstance(theta, ClusterAssignment) else theta)
    dist = _check_dist(dist)
    if squared:
        dist = dist * dist
    total = 0.0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        sub = dist[np.ix_(members, members)]
        total += float(sub.sum()) / (2.0 * len(members))
    return total


def _incremental_pass(dist: np.ndarray, labels: np.ndarray, k: int) -> tuple[float, int]:
    """One full relabeling pass in place; returns (cost_after, n_moves).

    Maintains R[i, c] = sum of distances from i to cluster c, cluster sizes
    and intra-cluster sums, so each candidate move costs O(k) to evaluate
    and O(n) to apply.
    """
    n = len(labels)
    R = np.zeros((n, k))
    for c in range(k):
        mask = labels == c
        if mask.any():
            R[:, c] = dist[:, mask].sum(axis=1)
    K = np.bincount(labels, minlength=k).astype(float)
    S = np.array([R[labels == c, c].sum() for c in range(k)])

    def cluster_cost(s, cnt):
        return s / (2.0 * cnt) if cnt > 0 else 0.0

    cost = sum(cluster_cost(S[c], K[c]) for c in range(k))
    moves = 0
    for i in range(n):
        c = labels[i]
        base_c = cluster_cost(S[c], K[c])
        after_c = cluster_cost(S[c] - 2.0 * R[i, c], K[c] - 1)
        best_delta = 0.0
        best = -1
        for c2 in range(k):
            if c2 == c:
                continue
            delta = (
                after_c
                - base_c
                + cluster_cost(S[c2] + 2.0 * R[i, c2], K[c2] + 1)
                - cluster_cost(S[c2], K[c2])
            )
            if delta < best_delta - 1e-12:
                best_delta = delta
                best = c2
        if best >= 0:
            S[c] -= 2.0 * R[i, c]
            S[best] += 2.0 * R[i, best]
            K[c] -= 1
            K[best] += 1
            R[:, c] -= dist[:, i]
            R[:, best] += dist[:, i]
            labels[i] = best
            new_cost = cost + best_delta
            assert new_cost < cost  # strict decrease per accepted move
            cost = new_cost
            moves += 1
    return cost, moves


def kmeans_fit(
    dist: np.ndarray,
    k: int,
    restarts: int = 10,
    max_passes: int = 100,
    seed: int = 0,
    squared: bool = False,
) -> ClusterAssignment:
    """Local-search k-means over a distance matrix, best of several restarts.

    Each restart assigns points to clusters uniformly at random, then sweeps
    single-point relabelings accepting the strictly best cost reduction until
    a full pass makes no change (or max_passes). Clusters may empty out; no
    repair step is applied.
    """
    dist = _check_dist(dist)
    n = dist.shape[0]
    if k < 1:
        raise InputError("k must be >= 1")
    if k > n:
        raise InputError(f"k={k} exceeds number of points n={n}")
    if squared:
        dist = dist * dist

    best_labels = None
    best_cost = np.inf
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        labels = rng.integers(0, k, size=n)
        cost = cost_of(labels, dist)
        for _ in range(max_passes):
            cost, moves = _incremental_pass(dist, labels, k)
            if moves == 0:
                break
        if cost < best_cost:
            best_cost = cost
            best_labels = labels.copy()
    return ClusterAssignment(labels=best_labels, k=k, cost=float(best_cost))
