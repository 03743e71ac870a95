"""Single-chart manifolds ("generalized surfaces") and their built-in instances.

A surface is described by a chart F mapping an open base space B in R^d into
ambient R^D, together with the ambient (possibly indefinite) metric used for
arc length. Built-ins: Euclidean space, the hyperboloid model of hyperbolic
space, the helicoid, and arbitrary Monge patches x -> (x, h(x)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InputError, NonLengthlikeSegmentError


def _as_points(b: np.ndarray) -> np.ndarray:
    return np.asarray(b, dtype=float)


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], b: np.ndarray) -> np.ndarray:
    """Central finite-difference Jacobian of fn at b.

    Step per coordinate is 1e-6 * (1 + |b_k|), balancing truncation against
    roundoff at double precision.
    """
    b = _as_points(b)
    d = b.shape[0]
    cols = []
    for k in range(d):
        h = 1e-6 * (1.0 + abs(b[k]))
        bp = b.copy()
        bm = b.copy()
        bp[k] += h
        bm[k] -= h
        cols.append((np.asarray(fn(bp), dtype=float) - np.asarray(fn(bm), dtype=float)) / (2.0 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class Surface:
    """A generalized surface: chart, inverse, Jacobian and ambient metric.

    Immutable after construction; every operation is a pure function, so a
    Surface may be shared freely across threads.
    """

    name: str
    kind: str  # "euclidean" | "hyperboloid" | "helicoid" | "monge"
    base_dim: int
    ambient_dim: int
    map: Callable[[np.ndarray], np.ndarray]
    inverse_map: Callable[[np.ndarray], np.ndarray]
    ambient_metric: np.ndarray
    jacobian: Callable[[np.ndarray], np.ndarray]
    jacobian_batch: Callable[[np.ndarray], np.ndarray]
    domain_check: Callable[[np.ndarray], bool]
    closed_form_distance: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    closed_form_pairwise: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    # Gradients of the closed-form distance w.r.t. the two *base* points,
    # returned as (g1, g2). Present only when closed_form_distance is.
    closed_form_distance_grad_base: Optional[
        Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    ] = None

    def require_in_domain(self, b: np.ndarray, what: str = "base point") -> None:
        if not self.domain_check(b):
            raise DomainError(f"{what} {np.asarray(b)} outside base domain of {self.name}")


@dataclass
class BasePointSet:
    """Points in the base space B, with optional class labels."""

    points: np.ndarray  # (n, d)
    labels: Optional[list] = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.labels is not None and len(self.labels) != len(self.points):
            raise InputError(
                f"labels length {len(self.labels)} != number of points {len(self.points)}"
            )

    def __len__(self) -> int:
        return len(self.points)


def _all_of_rd(b: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(np.asarray(b, dtype=float))))


def _check_dim(d: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise InputError(f"base dimension must be a positive integer, got {d!r}")


# ---------------------------------------------------------------------------
# Euclidean space
# ---------------------------------------------------------------------------

def euclidean_surface(d: int) -> Surface:
    """Flat surface: identity chart on R^d with the Euclidean metric."""
    _check_dim(d)
    ident = np.eye(d)

    def _map(b):
        return _as_points(b)

    def _jac(b):
        return ident.copy()

    def _jac_batch(B):
        B = np.atleast_2d(_as_points(B))
        return np.broadcast_to(ident, (B.shape[0], d, d)).copy()

    def _dist(s1, s2):
        return float(np.linalg.norm(_as_points(s1) - _as_points(s2)))

    def _pairwise(S1, S2):
        # Dot-product expansion keeps memory at O(n*m) for large point sets.
        S1 = np.atleast_2d(_as_points(S1))
        S2 = np.atleast_2d(_as_points(S2))
        sq = (
            np.sum(S1 * S1, axis=1)[:, None]
            + np.sum(S2 * S2, axis=1)[None, :]
            - 2.0 * S1 @ S2.T
        )
        return np.sqrt(np.maximum(sq, 0.0))

    def _dist_grad(b1, b2):
        b1 = _as_points(b1)
        b2 = _as_points(b2)
        diff = b1 - b2
        nrm = np.linalg.norm(diff)
        if nrm == 0.0:
            z = np.zeros_like(diff)
            return z, z.copy()
        g = diff / nrm
        return g, -g

    return Surface(
        name=f"euclidean:{d}",
        kind="euclidean",
        base_dim=d,
        ambient_dim=d,
        map=_map,
        inverse_map=_map,
        ambient_metric=ident.copy(),
        jacobian=_jac,
        jacobian_batch=_jac_batch,
        domain_check=_all_of_rd,
        closed_form_distance=_dist,
        closed_form_pairwise=_pairwise,
        closed_form_distance_grad_base=_dist_grad,
    )


# ---------------------------------------------------------------------------
# Hyperboloid model
# ---------------------------------------------------------------------------

def hyperboloid_surface(d: int) -> Surface:
    """Upper sheet of the d-dimensional hyperboloid in R^{d+1}.

    Chart b -> (b, sqrt(1 + b.b)); ambient metric is the Lorentzian
    diag(1, ..., 1, -1). Distances have the closed form
    arccosh(-s1' G s2), with the arccosh argument clamped below at 1 so that
    distance(x, x) is exactly 0 despite floating-point error.
    """
    _check_dim(d)
    g_diag = np.ones(d + 1)
    g_diag[-1] = -1.0
    G = np.diag(g_diag)

    def _map(b):
        b = _as_points(b)
        w = np.sqrt(1.0 + np.sum(b * b, axis=-1, keepdims=True))
        return np.concatenate([b, w], axis=-1)

    def _inverse(s):
        s = _as_points(s)
        return s[..., :d]

    def _jac(b):
        b = _as_points(b)
        w = np.sqrt(1.0 + b @ b)
        return np.vstack([np.eye(d), (b / w)[None, :]])

    def _jac_batch(B):
        B = np.atleast_2d(_as_points(B))
        n = B.shape[0]
        w = np.sqrt(1.0 + np.sum(B * B, axis=1))
        J = np.zeros((n, d + 1, d))
        J[:, :d, :] = np.eye(d)
        J[:, d, :] = B / w[:, None]
        return J

    def _dist(s1, s2):
        s1 = _as_points(s1)
        s2 = _as_points(s2)
        # Roundoff can push the arccosh argument to either side of 1 for
        # identical points; only an explicit equality check makes
        # distance(x, x) exactly 0.
        if np.array_equal(s1, s2):
            return 0.0
        arg = -(s1 @ (g_diag * s2))
        return float(np.arccosh(max(arg, 1.0)))

    def _pairwise(S1, S2):
        S1 = np.atleast_2d(_as_points(S1))
        S2 = np.atleast_2d(_as_points(S2))
        arg = -(S1 * g_diag) @ S2.T
        return np.arccosh(np.maximum(arg, 1.0))

    def _dist_grad(b1, b2):
        b1 = _as_points(b1)
        b2 = _as_points(b2)
        s1 = _map(b1)
        s2 = _map(b2)
        u = -(s1 @ (g_diag * s2))
        denom = np.sqrt(max(u * u - 1.0, 0.0))
        if denom == 0.0:
            z = np.zeros(d)
            return z, z.copy()
        du_ds1 = -(g_diag * s2)
        du_ds2 = -(g_diag * s1)
        g1 = _jac(b1).T @ du_ds1 / denom
        g2 = _jac(b2).T @ du_ds2 / denom
        return g1, g2

    return Surface(
        name=f"hyperboloid:{d}",
        kind="hyperboloid",
        base_dim=d,
        ambient_dim=d + 1,
        map=_map,
        inverse_map=_inverse,
        ambient_metric=G,
        jacobian=_jac,
        jacobian_batch=_jac_batch,
        domain_check=_all_of_rd,
        closed_form_distance=_dist,
        closed_form_pairwise=_pairwise,
        closed_form_distance_grad_base=_dist_grad,
    )


def hyperboloid_integrand(kappa: np.ndarray, kappa_dot: np.ndarray) -> float:
    """Arc-length speed on the 2-d hyperboloid for a base-space velocity.

    V = sqrt(k'.k' - (k.k')^2 / (1 + k.k)); the radicand is clamped at 0 to
    absorb roundoff (it must not fall below -1e-12).
    """
    k = _as_points(kappa)
    kd = _as_points(kappa_dot)
    radicand = kd @ kd - (k @ kd) ** 2 / (1.0 + k @ k)
    if radicand < -1e-12:
        raise NonLengthlikeSegmentError(
            f"hyperboloid integrand radicand is negative: {radicand}"
        )
    return float(np.sqrt(max(radicand, 0.0)))


# ---------------------------------------------------------------------------
# Helicoid
# ---------------------------------------------------------------------------

def helicoid_surface() -> Surface:
    """Helicoid (x1, x2) -> (x1 cos x2, x1 sin x2, x2) in Euclidean R^3.

    No closed-form distance is known, so distances on it always go through
    the iterative path refinement. The inverse chart is
    (u, v, w) -> (u cos w + v sin w, w), exact globally because w recovers
    the angle coordinate directly.
    """

    def _map(b):
        b = _as_points(b)
        x1 = b[..., 0]
        x2 = b[..., 1]
        return np.stack([x1 * np.cos(x2), x1 * np.sin(x2), x2], axis=-1)

    def _inverse(s):
        s = _as_points(s)
        u, v, w = s[..., 0], s[..., 1], s[..., 2]
        return np.stack([u * np.cos(w) + v * np.sin(w), w], axis=-1)

    def _jac(b):
        b = _as_points(b)
        x1, x2 = b[0], b[1]
        return np.array([
            [np.cos(x2), -x1 * np.sin(x2)],
            [np.sin(x2), x1 * np.cos(x2)],
            [0.0, 1.0],
        ])

    def _jac_batch(B):
        B = np.atleast_2d(_as_points(B))
        x1, x2 = B[:, 0], B[:, 1]
        J = np.empty((B.shape[0], 3, 2))
        J[:, 0, 0] = np.cos(x2)
        J[:, 0, 1] = -x1 * np.sin(x2)
        J[:, 1, 0] = np.sin(x2)
        J[:, 1, 1] = x1 * np.cos(x2)
        J[:, 2, 0] = 0.0
        J[:, 2, 1] = 1.0
        return J

    return Surface(
        name="helicoid",
        kind="helicoid",
        base_dim=2,
        ambient_dim=3,
        map=_map,
        inverse_map=_inverse,
        ambient_metric=np.eye(3),
        jacobian=_jac,
        jacobian_batch=_jac_batch,
        domain_check=_all_of_rd,
    )


# ---------------------------------------------------------------------------
# Monge patches
# ---------------------------------------------------------------------------

def monge_patch_surface(
    h: Callable[[np.ndarray], float],
    d: int,
    grad_h: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    name: str = "monge:custom",
    domain_check: Optional[Callable[[np.ndarray], bool]] = None,
) -> Surface:
    """Surface x -> (x, h(x)) in Euclidean R^{d+1} for a height function h.

    h must accept a length-d vector; if it also handles (n, d) arrays the
    batched chart map is vectorized, otherwise a row loop is used. When
    grad_h is omitted the Jacobian's last row falls back to central finite
    differences of h.
    """
    _check_dim(d)

    def _h_rows(B):
        B = np.atleast_2d(_as_points(B))
        try:
            vals = np.asarray(h(B), dtype=float)
            if vals.shape == (B.shape[0],):
                return vals
        except Exception:
            pass
        return np.array([float(h(row)) for row in B])

    def _map(b):
        b = _as_points(b)
        if b.ndim == 1:
            return np.concatenate([b, [float(h(b))]])
        return np.concatenate([b, _h_rows(b)[:, None]], axis=-1)

    def _inverse(s):
        s = _as_points(s)
        return s[..., :d]

    def _grad_h(b):
        if grad_h is not None:
            return np.asarray(grad_h(b), dtype=float)
        return fd_jacobian(lambda x: np.array([float(h(x))]), b)[0]

    def _jac(b):
        b = _as_points(b)
        return np.vstack([np.eye(d), _grad_h(b)[None, :]])

    def _jac_batch(B):
        B = np.atleast_2d(_as_points(B))
        n = B.shape[0]
        J = np.zeros((n, d + 1, d))
        J[:, :d, :] = np.eye(d)
        for i in range(n):
            J[i, d, :] = _grad_h(B[i])
        return J

    return Surface(
        name=name,
        kind="monge",
        base_dim=d,
        ambient_dim=d + 1,
        map=_map,
        inverse_map=_inverse,
        ambient_metric=np.eye(d + 1),
        jacobian=_jac,
        jacobian_batch=_jac_batch,
        domain_check=domain_check or _all_of_rd,
    )


# ---------------------------------------------------------------------------
# Named-surface registry
# ---------------------------------------------------------------------------

_MONGE_PATCHES: dict[str, Callable[[], Surface]] = {}


def register_monge_patch(name: str, factory: Callable[[], Surface]) -> None:
    _MONGE_PATCHES[name] = factory


register_monge_patch(
    "sinusoid",
    lambda: monge_patch_surface(
        h=lambda b: np.sin(np.asarray(b, dtype=float)[..., 0]),
        d=2,
        grad_h=lambda b: np.array([np.cos(float(np.asarray(b)[0])), 0.0]),
        name="monge:sinusoid",
    ),
)
register_monge_patch(
    "paraboloid",
    lambda: monge_patch_surface(
        h=lambda b: np.sum(np.asarray(b, dtype=float) ** 2, axis=-1),
        d=2,
        grad_h=lambda b: 2.0 * np.asarray(b, dtype=float),
        name="monge:paraboloid",
    ),
)
register_monge_patch(
    "flat",
    lambda: monge_patch_surface(
        h=lambda b: 0.0 * np.asarray(b, dtype=float)[..., 0],
        d=2,
        grad_h=lambda b: np.zeros(2),
        name="monge:flat",
    ),
)


def get_surface(spec: str) -> Surface:
    """Resolve a surface spec string.

    Accepted forms: "euclidean:<d>", "hyperboloid:<d>", "helicoid",
    "monge:<name>" for registered Monge patches.
    """
    spec = spec.strip()
    if spec == "helicoid":
        return helicoid_surface()
    if ":" in spec:
        head, tail = spec.split(":", 1)
        if head == "euclidean":
            return euclidean_surface(_parse_dim(spec, tail))
        if head == "hyperboloid":
            return hyperboloid_surface(_parse_dim(spec, tail))
        if head == "monge":
            if tail in _MONGE_PATCHES:
                return _MONGE_PATCHES[tail]()
            raise InputError(
                f"unknown Monge patch {tail!r}; registered: {sorted(_MONGE_PATCHES)}"
            )
    raise InputError(f"unknown surface spec {spec!r}")


def _parse_dim(spec: str, tail: str) -> int:
    try:
        d = int(tail)
    except ValueError:
        raise InputError(f"bad dimension in surface spec {spec!r}") from None
    if d < 1:
        raise InputError(f"dimension must be >= 1 in surface spec {spec!r}")
    return d
