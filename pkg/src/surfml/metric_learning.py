"""Learning a base-space linear transform that reshapes surface distances.

The transformed distance between two surface points is the geodesic distance
between F(L b_i) and F(L b_j). Two objectives are provided: a pull/push one
over all same/different-class pairs (MMC style) and a local large-margin one
over target-neighbor triples (LMNN style), both minimized by gradient descent
with backtracking line search on the entries of L.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import geodesic
from .errors import InputError, NumericalError
from .geodesic import GeodesicConfig, pairwise_distances
from .surfaces import BasePointSet, Surface


@dataclass
class LinearTransform:
    """The learnable d x d matrix acting on the base space."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if not np.all(np.isfinite(self.matrix)):
            raise InputError("transform matrix has non-finite entries")
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise InputError(f"transform must be square, got {self.matrix.shape}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def quadratic_form_norm(self) -> float:
        """Frobenius norm of L'L (the size of the induced quadratic form)."""
        M = self.matrix.T @ self.matrix
        return float(np.linalg.norm(M, "fro"))


@dataclass(frozen=True)
class PairSets:
    """Index pairs split by label agreement: similar (same class) and not."""

    similar: list
    dissimilar: list


@dataclass(frozen=True)
class TripleSet:
    """(i, j, l) with j a same-class target neighbor of i, l different-class."""

    triples: list


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient-descent settings shared by the learners and the MDS embedder."""

    lam: float = 1.0
    max_iters: int = 200
    grad_step: float = 1e-4
    lr_init: float = 0.1
    lr_shrink: float = 0.5
    lr_min: float = 1e-8
    rel_tol: float = 1e-6
    n_target_neighbors: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise InputError("lam must be nonnegative")
        for name in ("max_iters", "grad_step", "lr_init", "lr_shrink",
                     "lr_min", "rel_tol", "n_target_neighbors"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")


def transformed_distance(
    surface: Surface,
    L: LinearTransform | np.ndarray,
    b_i: np.ndarray,
    b_j: np.ndarray,
    config: Optional[GeodesicConfig] = None,
) -> float:
    """Distance between F(L b_i) and F(L b_j) on the surface."""
    config = config or GeodesicConfig()
    mat = L.matrix if isinstance(L, LinearTransform) else np.asarray(L, dtype=float)
    ti = mat @ np.asarray(b_i, dtype=float)
    tj = mat @ np.asarray(b_j, dtype=float)
    for t in (ti, tj):
        if not surface.domain_check(t):
            raise NumericalError(f"transform leaves domain: {t}")
    return geodesic.distance(surface, surface.map(ti), surface.map(tj), config)


def build_pair_sets(labels) -> PairSets:
    """All unordered index pairs, split into same-class and different-class."""
    labels = list(labels)
    n = len(labels)
    similar, dissimilar = [], []
    for i in range(n):
        for j in range(i + 1, n):
            (similar if labels[i] == labels[j] else dissimilar).append((i, j))
    return PairSets(similar=similar, dissimilar=dissimilar)


def _transformed_pairwise(
    surface: Surface, L: np.ndarray, base: np.ndarray, config: GeodesicConfig
) -> np.ndarray:
    return pairwise_distances(surface, base, transform=L, config=config)


def _as_matrix(L) -> np.ndarray:
    return L.matrix if isinstance(L, LinearTransform) else np.atleast_2d(np.asarray(L, dtype=float))


def mmc_objective(
    surface: Surface,
    L: LinearTransform | np.ndarray,
    points: BasePointSet,
    pairs: PairSets,
    lam: float,
    config: Optional[GeodesicConfig] = None,
) -> float:
    """Pull same-class pairs together, push different-class pairs apart.

    On the flat surface the classical squared-norm form is used; on curved
    surfaces the unsquared transformed geodesic distance is summed, mirroring
    the two original formulations.
    """
    config = config or GeodesicConfig()
    mat = _as_matrix(L)
    base = points.points if isinstance(points, BasePointSet) else np.atleast_2d(points)
    if surface.kind == "euclidean":
        tb = base @ mat.T
        pull = _sum_sq(tb, pairs.similar)
        push = _sum_sq(tb, pairs.dissimilar)
        return pull - lam * push
    rho = _transformed_pairwise(surface, mat, base, config)
    pull = _sum_at(rho, pairs.similar)
    push = _sum_at(rho, pairs.dissimilar)
    return pull - lam * push


def _sum_sq(tb: np.ndarray, idx_pairs) -> float:
    if not idx_pairs:
        return 0.0
    idx = np.asarray(idx_pairs)
    diff = tb[idx[:, 0]] - tb[idx[:, 1]]
    return float(np.sum(diff * diff))


def _sum_at(rho: np.ndarray, idx_pairs) -> float:
    if not idx_pairs:
        return 0.0
    idx = np.asarray(idx_pairs)
    return float(np.sum(rho[idx[:, 0], idx[:, 1]]))


def lmnn_objective(
    surface: Surface,
    L: LinearTransform | np.ndarray,
    points: BasePointSet,
    triples: TripleSet,
    lam: float,
    config: Optional[GeodesicConfig] = None,
) -> float:
    """Target-neighbor pull plus unit-margin hinge push over imposter triples."""
    config = config or GeodesicConfig()
    mat = _as_matrix(L)
    base = points.points if isinstance(points, BasePointSet) else np.atleast_2d(points)
    rho = _transformed_pairwise(surface, mat, base, config)
    target_pairs = sorted({(i, j) for i, j, _ in triples.triples})
    if not target_pairs:
        return 0.0
    tp = np.asarray(target_pairs)
    pull = float(np.sum(rho[tp[:, 0], tp[:, 1]]))
    if triples.triples:
        tr = np.asarray(triples.triples)
        hinge = 1.0 + rho[tr[:, 0], tr[:, 1]] - rho[tr[:, 0], tr[:, 2]]
        push = float(np.sum(np.maximum(hinge, 0.0)))
    else:
        push = 0.0
    return pull + lam * push


def select_target_neighbors(
    surface: Surface,
    points: BasePointSet,
    k_t: int,
    config: Optional[GeodesicConfig] = None,
) -> list[list[int]]:
    """Per point, its k_t nearest same-class points under the untransformed
    distance. Distance ties break toward the lower index; lists truncate when
    a class is small. Fixed for the whole optimization.
    """
    config = config or GeodesicConfig()
    if points.labels is None:
        raise InputError("target neighbors need labeled points")
    rho = pairwise_distances(surface, points, config=config)
    labels = list(points.labels)
    n = len(labels)
    out = []
    for i in range(n):
        same = [j for j in range(n) if j != i and labels[j] == labels[i]]
        same.sort(key=lambda j: (rho[i, j], j))
        out.append(same[:k_t])
    return out


def build_triples(
    surface: Surface,
    points: BasePointSet,
    k_t: int,
    config: Optional[GeodesicConfig] = None,
    imposter_cap: int = 50,
) -> TripleSet:
    """Triples from fixed target neighbors and nearest different-class points.

    Imposters are capped at imposter_cap per (i, j) target pair, nearest
    first under the untransformed distance.
    """
    config = config or GeodesicConfig()
    targets = select_target_neighbors(surface, points, k_t, config)
    rho = pairwise_distances(surface, points, config=config)
    labels = list(points.labels)
    n = len(labels)
    triples = []
    for i in range(n):
        others = [l for l in range(n) if labels[l] != labels[i]]
        others.sort(key=lambda l: (rho[i, l], l))
        imposters = others[:imposter_cap]
        for j in targets[i]:
            for l in imposters:
                triples.append((i, j, l))
    return TripleSet(triples=triples)


# ---------------------------------------------------------------------------
# Analytic gradients (closed-form surfaces only)
# ---------------------------------------------------------------------------

def _rho_grad_L(surface: Surface, L: np.ndarray, b1: np.ndarray, b2: np.ndarray):
    """(rho_L(b1, b2), d rho / dL) for euclidean (unsquared) and hyperboloid."""
    if surface.kind == "euclidean":
        dv = b1 - b2
        Ld = L @ dv
        nrm = float(np.linalg.norm(Ld))
        if nrm == 0.0:
            return 0.0, np.zeros_like(L)
        return nrm, np.outer(Ld, dv) / nrm
    if surface.kind == "hyperboloid":
        M = L.T @ L
        d11 = float(b1 @ M @ b1)
        d22 = float(b2 @ M @ b2)
        d12 = float(b1 @ M @ b2)
        s = np.sqrt((1.0 + d11) * (1.0 + d22))
        g = s - d12
        rho = float(np.arccosh(max(g, 1.0)))
        denom = np.sqrt(max(g * g - 1.0, 0.0))
        if denom == 0.0:
            return rho, np.zeros_like(L)
        dg_dM = (
            0.5 * np.sqrt((1.0 + d22) / (1.0 + d11)) * np.outer(b1, b1)
            + 0.5 * np.sqrt((1.0 + d11) / (1.0 + d22)) * np.outer(b2, b2)
            - 0.5 * (np.outer(b1, b2) + np.outer(b2, b1))
        )
        return rho, (2.0 / denom) * (L @ dg_dM)
    raise InputError(f"no analytic transform gradient for surface kind {surface.kind!r}")


def mmc_gradient(
    surface: Surface,
    L: LinearTransform | np.ndarray,
    points: BasePointSet,
    pairs: PairSets,
    lam: float,
) -> np.ndarray:
    """Analytic gradient of the pull/push objective w.r.t. L."""
    mat = _as_matrix(L)
    base = points.points if isinstance(points, BasePointSet) else np.atleast_2d(points)
    if surface.kind == "euclidean":
        M = np.zeros((base.shape[1], base.shape[1]))
        for i, j in pairs.similar:
            d = base[i] - base[j]
            M += np.outer(d, d)
        for i, j in pairs.dissimilar:
            d = base[i] - base[j]
            M -= lam * np.outer(d, d)
        return 2.0 * mat @ M
    if surface.kind == "hyperboloid":
        return _mmc_gradient_hyperboloid(mat, base, pairs, lam)
    grad = np.zeros_like(mat)
    for i, j in pairs.similar:
        _, g = _rho_grad_L(surface, mat, base[i], base[j])
        grad += g
    for i, j in pairs.dissimilar:
        _, g = _rho_grad_L(surface, mat, base[i], base[j])
        grad -= lam * g
    return grad


def _mmc_gradient_hyperboloid(
    mat: np.ndarray, base: np.ndarray, pairs: PairSets, lam: float
) -> np.ndarray:
    """All-pairs hyperboloid gradient assembled with matrix products.

    Summing the per-pair d rho / dL terms factors into
    L (B' diag(u) B - B' W B / 2) with u_i = sum_j W_ij alpha_ij, where
    W carries the pair signs and the 2 / sqrt(g^2 - 1) chain factor and
    alpha_ij = sqrt((1 + Delta_jj) / (1 + Delta_ii)) / 2.
    """
    n = base.shape[0]
    tb = base @ mat.T
    a = 1.0 + np.einsum("ij,ij->i", tb, tb)  # 1 + Delta_ii
    g = np.sqrt(np.outer(a, a)) - tb @ tb.T
    S = np.zeros((n, n))
    if pairs.similar:
        idx = np.asarray(pairs.similar)
        S[idx[:, 0], idx[:, 1]] = S[idx[:, 1], idx[:, 0]] = 1.0
    if pairs.dissimilar:
        idx = np.asarray(pairs.dissimilar)
        S[idx[:, 0], idx[:, 1]] = S[idx[:, 1], idx[:, 0]] = -lam
    denom2 = g * g - 1.0
    W = np.zeros_like(g)
    ok = denom2 > 0.0
    W[ok] = S[ok] * 2.0 / np.sqrt(denom2[ok])
    np.fill_diagonal(W, 0.0)
    alpha = 0.5 * np.sqrt(np.outer(1.0 / a, a))
    u = (W * alpha).sum(axis=1)
    M_total = base.T @ (u[:, None] * base) - 0.5 * (base.T @ W @ base)
    return mat @ M_total


def lmnn_gradient(
    surface: Surface,
    L: LinearTransform | np.ndarray,
    points: BasePointSet,
    triples: TripleSet,
    lam: float,
) -> np.ndarray:
    """Analytic (sub)gradient of the large-margin objective w.r.t. L."""
    mat = _as_matrix(L)
    base = points.points if isinstance(points, BasePointSet) else np.atleast_2d(points)
    cache: dict[tuple[int, int], tuple[float, np.ndarray]] = {}

    def rg(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            cache[key] = _rho_grad_L(surface, mat, base[key[0]], base[key[1]])
        return cache[key]

    grad = np.zeros_like(mat)
    for i, j in sorted({(i, j) for i, j, _ in triples.triples}):
        _, g = rg(i, j)
        grad += g
    for i, j, l in triples.triples:
        rij, gij = rg(i, j)
        ril, gil = rg(i, l)
        if 1.0 + rij - ril > 0.0:
            grad += lam * (gij - gil)
    return grad


# ---------------------------------------------------------------------------
# Descent engine
# ---------------------------------------------------------------------------

def fd_gradient(objective: Callable[[np.ndarray], float], L: np.ndarray, h: float) -> np.ndarray:
    """Central finite-difference gradient over the entries of L."""
    grad = np.zeros_like(L)
    for a in range(L.shape[0]):
        for b in range(L.shape[1]):
            Lp = L.copy()
            Lm = L.copy()
            Lp[a, b] += h
            Lm[a, b] -= h
            grad[a, b] = (objective(Lp) - objective(Lm)) / (2.0 * h)
    return grad


def minimize_matrix(
    objective: Callable[[np.ndarray], float],
    L0: np.ndarray,
    opt: OptimizerConfig,
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple[np.ndarray, list[float]]:
    """Projected gradient descent with backtracking line search.

    The returned trace of objective values is non-increasing: a candidate
    step is accepted only if it strictly decreases the objective, and the
    search stops when no step down to lr_min does.
    """
    project = project or (lambda M: M)
    L = project(np.asarray(L0, dtype=float).copy())
    f = objective(L)
    trace = [f]
    for it in range(opt.max_iters):
        if gradient is not None:
            G = gradient(L)
        else:
            G = fd_gradient(objective, L, opt.grad_step)
        gnorm = np.linalg.norm(G)
        if gnorm == 0.0:
            break
        eta = opt.lr_init / max(gnorm, 1.0)
        improved = False
        while eta >= opt.lr_min:
            cand = project(L - eta * G)
            fc = objective(cand)
            if fc < f:
                L, f = cand, fc
                improved = True
                break
            eta *= opt.lr_shrink
        if not improved:
            if it == 0:
                warnings.warn("no descent direction at the starting point", RuntimeWarning)
            break
        trace.append(f)
        if len(trace) >= 2 and trace[-2] - trace[-1] < opt.rel_tol * max(abs(trace[-2]), 1e-300):
            break
    return L, trace


def fit(
    surface: Surface,
    points: BasePointSet,
    labels=None,
    objective_kind: str = "mmc",
    opt: Optional[OptimizerConfig] = None,
    geo: Optional[GeodesicConfig] = None,
    gradient: str = "auto",
) -> tuple[LinearTransform, list[float]]:
    """Learn L by gradient descent from the identity.

    objective_kind is "mmc" (pull/push over all pairs, with L renormalized
    to Frobenius norm sqrt(d) after every step so the objective stays
    bounded) or "lmnn" (large-margin triples, unconstrained). gradient is
    "fd", "analytic", or "auto" (analytic when the surface supports it).
    """
    opt = opt or OptimizerConfig()
    geo = geo or GeodesicConfig()
    if labels is not None:
        points = BasePointSet(points.points if isinstance(points, BasePointSet) else points,
                              labels=list(labels))
    if points.labels is None:
        raise InputError("fit needs labeled points")
    d = points.points.shape[1]
    if surface.base_dim != d:
        raise InputError(f"points have dim {d} but surface base_dim is {surface.base_dim}")

    analytic_ok = surface.kind in ("euclidean", "hyperboloid")
    use_analytic = gradient == "analytic" or (gradient == "auto" and analytic_ok)
    if gradient == "analytic" and not analytic_ok:
        raise InputError(f"analytic gradient unavailable for {surface.kind!r}")

    if objective_kind == "mmc":
        pairs = build_pair_sets(points.labels)

        def obj(L):
            return mmc_objective(surface, L, points, pairs, opt.lam, geo)

        grad_fn = (lambda L: mmc_gradient(surface, L, points, pairs, opt.lam)) if use_analytic else None

        def project(L):
            nrm = np.linalg.norm(L, "fro")
            if nrm == 0.0:
                return L
            return L * (np.sqrt(d) / nrm)

    elif objective_kind == "lmnn":
        triples = build_triples(surface, points, opt.n_target_neighbors, geo)

        def obj(L):
            return lmnn_objective(surface, L, points, triples, opt.lam, geo)

        grad_fn = (lambda L: lmnn_gradient(surface, L, points, triples, opt.lam)) if use_analytic else None
        project = None
    else:
        raise InputError(f"unknown objective kind {objective_kind!r}")

    L, trace = minimize_matrix(obj, np.eye(d), opt, gradient=grad_fn, project=project)
    return LinearTransform(L), trace
