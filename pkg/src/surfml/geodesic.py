"""Geodesic distance approximation on generalized surfaces.

Distances come either from a surface's closed form or from an iterative
piecewise-linear path refinement: straight base-space segments are measured
by Gauss-Legendre quadrature of the pullback arc-length integrand, and
intermediate waypoints are locally resampled until the total length stops
improving.
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError, NonLengthlikeSegmentError, NumericalError, SamplingError
from .surfaces import BasePointSet, Surface

#: Radicand below this (relative to segment scale) indicates metric misuse.
_CLAMP_ABORT = 1e-6


@dataclass(frozen=True)
class GeodesicConfig:
    """Knobs for the path-refinement distance approximation."""

    n_intermediate: int = 16
    n_samples: int = 32
    quadrature_points: int = 16
    max_sweeps: int = 50
    rel_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.n_intermediate < 0:
            raise InputError("n_intermediate must be >= 0")
        for name in ("n_samples", "quadrature_points", "max_sweeps"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.rel_tol <= 0:
            raise InputError("rel_tol must be positive")


@dataclass
class PathPolyline:
    """Ordered base-space waypoints approximating a geodesic."""

    waypoints: np.ndarray  # (n+2, d)
    surface: Surface
    cached_length: float
    quadrature_points: int = 16

    def recompute_length(self) -> float:
        segs = segment_length_batch(
            self.surface, self.waypoints[:-1], self.waypoints[1:], self.quadrature_points
        )
        return float(np.sum(segs))

    def to_csv(self) -> str:
        """One waypoint per row: base coordinates, then ambient coordinates."""
        buf = io.StringIO()
        d = self.surface.base_dim
        D = self.surface.ambient_dim
        cols = [f"b{i+1}" for i in range(d)] + [f"s{i+1}" for i in range(D)]
        buf.write(",".join(cols) + "\n")
        ambient = self.surface.map(self.waypoints)
        for b, s in zip(self.waypoints, np.atleast_2d(ambient)):
            buf.write(",".join(repr(float(v)) for v in list(b) + list(s)) + "\n")
        return buf.getvalue()


_LEGGAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _unit_leggauss(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    if q not in _LEGGAUSS_CACHE:
        x, w = np.polynomial.legendre.leggauss(q)
        _LEGGAUSS_CACHE[q] = (0.5 * (x + 1.0), 0.5 * w)
    return _LEGGAUSS_CACHE[q]


def _canonical_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Fixed endpoint ordering makes sigma(a, b) == sigma(b, a) bit-exactly.
    if a.tobytes() > b.tobytes():
        return b, a
    return a, b


def segment_length_batch(
    surface: Surface, A: np.ndarray, B: np.ndarray, quadrature_points: int
) -> np.ndarray:
    """Arc lengths of straight base-space segments A[i] -> B[i], batched.

    Each segment is integrated with fixed Gauss-Legendre nodes; endpoints are
    canonically ordered first so lengths are exactly symmetric.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, d = A.shape
    starts = np.empty_like(A)
    ends = np.empty_like(B)
    for i in range(n):
        starts[i], ends[i] = _canonical_pair(A[i], B[i])
    vel = ends - starts  # constant along each segment
    t, w = _unit_leggauss(quadrature_points)
    # (n, q, d) sample points along each segment
    pts = starts[:, None, :] + t[None, :, None] * vel[:, None, :]
    J = surface.jacobian_batch(pts.reshape(n * quadrature_points, d))
    v = np.einsum("pij,pj->pi", J, np.repeat(vel, quadrature_points, axis=0))
    G = surface.ambient_metric
    rad = np.einsum("pi,ij,pj->p", v, G, v).reshape(n, quadrature_points)
    worst = rad.min(initial=0.0)
    if worst < -_CLAMP_ABORT:
        raise NonLengthlikeSegmentError(
            f"non-lengthlike segment: integrand fell to {worst} on {surface.name} "
            "(metric-signature misuse?)"
        )
    speed = np.sqrt(np.maximum(rad, 0.0))
    return speed @ w


def segment_length(
    surface: Surface, a: np.ndarray, b: np.ndarray, quadrature_points: int = 16
) -> float:
    """Arc length of the straight base-space segment from a to b."""
    return float(segment_length_batch(surface, [a], [b], quadrature_points)[0])


def _pair_seed(seed: int, x: np.ndarray, y: np.ndarray) -> int:
    """Deterministic RNG seed shared by the unordered endpoint pair."""
    bx = np.asarray(x, dtype=float).tobytes()
    by = np.asarray(y, dtype=float).tobytes()
    lo, hi = (bx, by) if bx <= by else (by, bx)
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(lo)
    h.update(hi)
    return int.from_bytes(h.digest(), "little")


def _sample_ball(
    rng: np.random.Generator, center: np.ndarray, radius: float, m: int, surface: Surface
) -> np.ndarray:
    """m points uniform in the d-ball around center, rejected against the domain."""
    d = center.shape[0]
    out = np.empty((m, d))
    filled = 0
    draws = 0
    while filled < m:
        direc = rng.standard_normal((m, d))
        norms = np.linalg.norm(direc, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radii = radius * rng.random(m) ** (1.0 / d)
        cand = center + direc / norms * radii[:, None]
        for row in cand:
            draws += 1
            if surface.domain_check(row):
                out[filled] = row
                filled += 1
                if filled == m:
                    break
            if draws > 100 * m:
                raise SamplingError(
                    f"disconnected or out-of-domain: rejection sampling failed after "
                    f"{draws} draws around {center} on {surface.name}"
                )
    return out


#: Relative step sizes, in units of the ball radius, tried along the local
#: descent direction of each intermediate point.
_DESCENT_STEPS = tuple(0.5 * 0.25**s for s in range(8))


def _deterministic_candidates(
    surface: Surface,
    left: np.ndarray,
    cur: np.ndarray,
    right: np.ndarray,
    radius: np.ndarray,
    q: int,
) -> np.ndarray:
    """Directed candidates for a batch of intermediate points.

    For each point: the midpoint of its two neighbors, plus a short line
    search along the finite-difference descent direction of the adjacent
    length sum. Candidates outside the domain fall back to the current point
    (a no-op under strict-improvement acceptance).
    """
    k, d = cur.shape
    h = 1e-6 * (1.0 + np.linalg.norm(cur, axis=1, keepdims=True))  # (k, 1)
    # Probe points cur +/- h e_j, shape (k, 2d, d).
    probes = np.repeat(cur[:, None, :], 2 * d, axis=1)
    for j in range(d):
        probes[:, 2 * j, j] += h[:, 0]
        probes[:, 2 * j + 1, j] -= h[:, 0]
    flat = probes.reshape(k * 2 * d, d)
    rep_left = np.repeat(left, 2 * d, axis=0)
    rep_right = np.repeat(right, 2 * d, axis=0)
    f = (
        segment_length_batch(surface, rep_left, flat, q)
        + segment_length_batch(surface, flat, rep_right, q)
    ).reshape(k, 2 * d)
    grad = (f[:, 0::2] - f[:, 1::2]) / (2.0 * h)  # (k, d)
    gnorm = np.linalg.norm(grad, axis=1, keepdims=True)
    gnorm[gnorm == 0.0] = 1.0
    direc = -grad / gnorm

    cands = np.empty((k, 1 + len(_DESCENT_STEPS), d))
    cands[:, 0] = 0.5 * (left + right)
    for s, frac in enumerate(_DESCENT_STEPS):
        cands[:, 1 + s] = cur + (frac * radius)[:, None] * direc
    for i in range(k):
        for c in range(cands.shape[1]):
            if not surface.domain_check(cands[i, c]):
                cands[i, c] = cur[i]
    return cands


def refine_path(
    surface: Surface, x: np.ndarray, y: np.ndarray, config: GeodesicConfig
) -> tuple[PathPolyline, float]:
    """Iteratively shorten a piecewise-linear base-space path from x to y.

    Starts from linearly spaced intermediates between the base preimages,
    then sweeps the intermediate points, proposing for each a set of
    candidates from the ball of radius twice the longer adjacent segment
    (m uniform samples, the neighbor midpoint, and a short descent-direction
    line search) and accepting a candidate only when the two adjacent
    segment lengths strictly decrease. Each sweep updates odd-indexed then
    even-indexed points; the two adjacent segments of same-parity points are
    disjoint, so each half-sweep is evaluated in one batch. Stops when a
    full sweep improves the total length by less than rel_tol relatively,
    or after max_sweeps.
    """
    a0 = np.asarray(surface.inverse_map(np.asarray(x, dtype=float)), dtype=float)
    a1 = np.asarray(surface.inverse_map(np.asarray(y, dtype=float)), dtype=float)
    surface.require_in_domain(a0, "endpoint")
    surface.require_in_domain(a1, "endpoint")
    n = config.n_intermediate
    q = config.quadrature_points

    ts = np.linspace(0.0, 1.0, n + 2)
    waypoints = a0[None, :] + ts[:, None] * (a1 - a0)[None, :]
    seg = segment_length_batch(surface, waypoints[:-1], waypoints[1:], q)
    total = float(seg.sum())

    if n == 0 or total == 0.0:
        return PathPolyline(waypoints, surface, total, q), total

    rng = np.random.default_rng(config.seed)
    m = config.n_samples
    parity_idx = [
        np.array([i for i in range(1, n + 1) if i % 2 == p]) for p in (1, 0)
    ]
    for _ in range(config.max_sweeps):
        prev_total = total
        for idx in parity_idx:
            if idx.size == 0:
                continue
            left = waypoints[idx - 1]
            cur = waypoints[idx]
            right = waypoints[idx + 1]
            radius = 2.0 * np.maximum(
                np.linalg.norm(cur - left, axis=1),
                np.linalg.norm(cur - right, axis=1),
            )
            live = radius > 0.0
            if not np.any(live):
                continue
            idx = idx[live]
            left, cur, right, radius = left[live], cur[live], right[live], radius[live]
            k, d = cur.shape
            cand = np.empty((k, m + 1 + len(_DESCENT_STEPS), d))
            for i in range(k):
                cand[i, :m] = _sample_ball(rng, cur[i], radius[i], m, surface)
            cand[:, m:] = _deterministic_candidates(surface, left, cur, right, radius, q)
            n_cand = cand.shape[1]
            flat = cand.reshape(k * n_cand, d)
            lens_left = segment_length_batch(
                surface, np.repeat(left, n_cand, axis=0), flat, q
            ).reshape(k, n_cand)
            lens_right = segment_length_batch(
                surface, flat, np.repeat(right, n_cand, axis=0), q
            ).reshape(k, n_cand)
            sums = lens_left + lens_right
            best = np.argmin(sums, axis=1)
            rows = np.arange(k)
            current = seg[idx - 1] + seg[idx]
            accept = sums[rows, best] < current
            if not np.any(accept):
                continue
            acc_idx = idx[accept]
            acc_best = best[accept]
            waypoints[acc_idx] = cand[rows[accept], acc_best]
            seg[acc_idx - 1] = lens_left[rows[accept], acc_best]
            seg[acc_idx] = lens_right[rows[accept], acc_best]
            new_total = float(seg.sum())
            if new_total > total + 1e-12:
                raise NumericalError(
                    "path refinement increased total length; this is a bug"
                )
            total = new_total
        if prev_total - total < config.rel_tol * max(prev_total, 1e-300):
            break

    return PathPolyline(waypoints, surface, total, q), total


def distance(
    surface: Surface, x: np.ndarray, y: np.ndarray, config: GeodesicConfig
) -> float:
    """Geodesic distance between two ambient points.

    Uses the surface's closed form when available; otherwise runs path
    refinement with an RNG seed derived from the unordered endpoint pair,
    so distance(x, y) == distance(y, x) bit-exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if surface.closed_form_distance is not None:
        return surface.closed_form_distance(x, y)
    if x.tobytes() == y.tobytes():
        return 0.0
    if y.tobytes() < x.tobytes():
        x, y = y, x
    cfg = dataclasses.replace(config, seed=_pair_seed(config.seed, x, y))
    _, length = refine_path(surface, x, y, cfg)
    return length


def pairwise_distances(
    surface: Surface,
    points: BasePointSet | np.ndarray,
    transform=None,
    config: Optional[GeodesicConfig] = None,
) -> np.ndarray:
    """Symmetric matrix of (optionally L-transformed) geodesic distances.

    Entry (i, j) is the distance between F(L b_i) and F(L b_j); the diagonal
    is exactly zero. Per-pair RNG seeding makes the result independent of
    evaluation order.
    """
    if config is None:
        config = GeodesicConfig()
    base = points.points if isinstance(points, BasePointSet) else np.atleast_2d(points)
    if base.size == 0:
        raise InputError("pairwise_distances needs at least one point")
    if transform is not None:
        L = transform.matrix if hasattr(transform, "matrix") else np.asarray(transform)
        base = base @ L.T
        for i, b in enumerate(base):
            if not surface.domain_check(b):
                raise NumericalError(f"transform leaves domain at point {i}: {b}")
    ambient = np.atleast_2d(surface.map(base))
    n = len(base)
    if surface.closed_form_pairwise is not None:
        mat = np.asarray(surface.closed_form_pairwise(ambient, ambient), dtype=float)
        # BLAS products are not guaranteed symmetric to the last bit.
        mat = np.minimum(mat, mat.T)
        np.fill_diagonal(mat, 0.0)
        return mat
    mat = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    if config.n_intermediate == 0:
        # Single-chord distances reduce to one batched quadrature call.
        lens = segment_length_batch(surface, base[iu], base[ju], config.quadrature_points)
        mat[iu, ju] = lens
        mat[ju, iu] = lens
        return mat
    for i, j in zip(iu, ju):
        try:
            mat[i, j] = mat[j, i] = distance(surface, ambient[i], ambient[j], config)
        except NumericalError as e:
            raise NumericalError(f"distance failed at pair ({i}, {j}): {e}") from e
    return mat
