"""Transform learning: objectives, gradients and the descent engine."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfml.errors import InputError
from surfml.geodesic import GeodesicConfig
from surfml.metric_learning import (
    LinearTransform,
    OptimizerConfig,
    PairSets,
    TripleSet,
    build_pair_sets,
    build_triples,
    fd_gradient,
    fit,
    lmnn_gradient,
    lmnn_objective,
    minimize_matrix,
    mmc_gradient,
    mmc_objective,
    select_target_neighbors,
    transformed_distance,
)
from surfml.surfaces import BasePointSet, euclidean_surface, helicoid_surface, hyperboloid_surface

GEO = GeodesicConfig(n_intermediate=0)


def _labeled_points(rng, n=10, d=2, classes=2):
    pts = rng.normal(0, 1.5, (n, d))
    labels = [int(v) for v in rng.integers(0, classes, n)]
    # guarantee every class appears at least twice
    labels[:2 * classes] = [c for c in range(classes) for _ in range(2)]
    return BasePointSet(pts, labels=labels)


def test_transformed_distance_squared_is_quadratic_form():
    surface = euclidean_surface(3)
    rng = np.random.default_rng(0)
    for _ in range(100):
        L = rng.normal(0, 1, (3, 3))
        x, y = rng.normal(0, 2, (2, 3))
        rho = transformed_distance(surface, L, x, y)
        expected = (x - y) @ L.T @ L @ (x - y)
        assert rho ** 2 == pytest.approx(expected, abs=1e-10)


def test_mmc_objective_euclidean_matches_manual_sum():
    surface = euclidean_surface(2)
    rng = np.random.default_rng(1)
    pts = _labeled_points(rng)
    pairs = build_pair_sets(pts.labels)
    L = rng.normal(0, 1, (2, 2))
    lam = 0.7
    manual = 0.0
    for i, j in pairs.similar:
        d = L @ (pts.points[i] - pts.points[j])
        manual += d @ d
    for i, j in pairs.dissimilar:
        d = L @ (pts.points[i] - pts.points[j])
        manual -= lam * (d @ d)
    assert mmc_objective(surface, L, pts, pairs, lam) == pytest.approx(manual, abs=1e-9)


def test_mmc_euclidean_scale_equivariance():
    # Replacing L by cL multiplies the squared pull and push terms by c^2.
    surface = euclidean_surface(2)
    rng = np.random.default_rng(2)
    pts = _labeled_points(rng)
    pairs = build_pair_sets(pts.labels)
    L = rng.normal(0, 1, (2, 2))
    for c in (0.5, 2.0, 3.7):
        assert mmc_objective(surface, c * L, pts, pairs, 0.3) == pytest.approx(
            c ** 2 * mmc_objective(surface, L, pts, pairs, 0.3), rel=1e-12)


def test_lmnn_objective_matches_manual_sum():
    surface = euclidean_surface(2)
    rng = np.random.default_rng(3)
    pts = _labeled_points(rng)
    triples = build_triples(surface, pts, 2, GEO)
    L = rng.normal(0, 1, (2, 2)) + np.eye(2)
    lam = 1.3

    def rho(i, j):
        d = L @ (pts.points[i] - pts.points[j])
        return np.linalg.norm(d)

    manual = sum(rho(i, j) for i, j in sorted({(i, j) for i, j, _ in triples.triples}))
    manual += lam * sum(max(1.0 + rho(i, j) - rho(i, l), 0.0)
                        for i, j, l in triples.triples)
    assert lmnn_objective(surface, L, pts, triples, lam) == pytest.approx(manual, abs=1e-9)


def test_lmnn_objective_invariant_to_triple_order():
    surface = euclidean_surface(2)
    rng = np.random.default_rng(4)
    pts = _labeled_points(rng)
    triples = build_triples(surface, pts, 2, GEO)
    shuffled = list(triples.triples)
    rng.shuffle(shuffled)
    L = rng.normal(0, 1, (2, 2))
    assert lmnn_objective(surface, L, pts, TripleSet(shuffled), 1.0) == pytest.approx(
        lmnn_objective(surface, L, pts, triples, 1.0), abs=1e-12)


@pytest.mark.parametrize("make_surface", [euclidean_surface, hyperboloid_surface])
def test_mmc_analytic_gradient_matches_fd(make_surface):
    surface = make_surface(2)
    rng = np.random.default_rng(5)
    for trial in range(5):
        pts = _labeled_points(rng)
        pairs = build_pair_sets(pts.labels)
        L = np.eye(2) + 0.3 * rng.normal(0, 1, (2, 2))
        lam = 0.5
        analytic = mmc_gradient(surface, L, pts, pairs, lam)
        fd = fd_gradient(lambda M: mmc_objective(surface, M, pts, pairs, lam, GEO),
                         L, 1e-5)
        assert np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1.0) < 1e-4


@pytest.mark.parametrize("make_surface", [euclidean_surface, hyperboloid_surface])
def test_lmnn_analytic_gradient_matches_fd(make_surface):
    surface = make_surface(2)
    rng = np.random.default_rng(6)
    for trial in range(5):
        pts = _labeled_points(rng)
        triples = build_triples(surface, pts, 2, GEO)
        L = np.eye(2) + 0.2 * rng.normal(0, 1, (2, 2))
        analytic = lmnn_gradient(surface, L, pts, triples, 1.0)
        fd = fd_gradient(lambda M: lmnn_objective(surface, M, pts, triples, 1.0, GEO),
                         L, 1e-6)
        # hinge kinks make exact agreement impossible at active margins; the
        # seeded instances here stay off the kink
        assert np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1.0) < 1e-4


def test_build_pair_sets_counts_and_partition():
    labels = [0, 0, 1, 1, 2]
    pairs = build_pair_sets(labels)
    assert set(pairs.similar) == {(0, 1), (2, 3)}
    assert len(pairs.similar) + len(pairs.dissimilar) == 5 * 4 // 2
    assert not set(pairs.similar) & set(pairs.dissimilar)


def test_select_target_neighbors_ties_and_truncation():
    surface = euclidean_surface(2)
    pts = BasePointSet(
        np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [5.0, 5.0]]),
        labels=[0, 0, 0, 1],
    )
    targets = select_target_neighbors(surface, pts, 2, GEO)
    # equidistant neighbors of point 0 break ties toward the lower index
    assert targets[0] == [1, 2]
    # the singleton class has no same-class neighbors at all
    assert targets[3] == []
    # requesting more neighbors than the class holds truncates
    assert select_target_neighbors(surface, pts, 10, GEO)[0] == [1, 2]


def test_build_triples_imposter_cap():
    surface = euclidean_surface(2)
    rng = np.random.default_rng(7)
    pts = _labeled_points(rng, n=12)
    triples = build_triples(surface, pts, 1, GEO, imposter_cap=3)
    per_pair = {}
    for i, j, l in triples.triples:
        per_pair.setdefault((i, j), []).append(l)
    assert all(len(v) <= 3 for v in per_pair.values())


def test_minimize_matrix_trace_non_increasing():
    rng = np.random.default_rng(8)
    A = rng.normal(0, 1, (3, 3))
    target = A @ A.T + np.eye(3)

    def objective(L):
        return float(np.sum((L - target) ** 2))

    L, trace = minimize_matrix(objective, np.eye(3), OptimizerConfig(max_iters=200))
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    assert trace[-1] < 0.05 * trace[0]


def test_minimize_matrix_stationary_and_no_descent_starts():
    # A zero gradient stops immediately and quietly.
    _, trace = minimize_matrix(lambda L: float(np.sum(L ** 2)), np.zeros((2, 2)),
                               OptimizerConfig(max_iters=10))
    assert len(trace) == 1
    # A nonzero reported gradient that buys no improvement warns instead.
    with pytest.warns(RuntimeWarning, match="no descent direction"):
        _, trace = minimize_matrix(lambda L: 1.0, np.eye(2),
                                   OptimizerConfig(max_iters=10),
                                   gradient=lambda L: np.ones((2, 2)))
    assert len(trace) == 1


def test_fit_mmc_projects_to_sqrt_d_and_trace_non_increasing():
    surface = euclidean_surface(2)
    rng = np.random.default_rng(9)
    pts = _labeled_points(rng, n=14)
    L, trace = fit(surface, pts, objective_kind="mmc",
                   opt=OptimizerConfig(lam=0.5, max_iters=30), geo=GEO)
    assert np.linalg.norm(L.matrix, "fro") == pytest.approx(np.sqrt(2), abs=1e-9)
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_fit_lmnn_trace_non_increasing_all_surfaces():
    rng = np.random.default_rng(10)
    for surface in (euclidean_surface(2), hyperboloid_surface(2), helicoid_surface()):
        pts = _labeled_points(rng, n=10)
        _, trace = fit(surface, pts, objective_kind="lmnn",
                       opt=OptimizerConfig(max_iters=10), geo=GEO)
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_fit_pull_only_mmc_decreases_toward_zero():
    # lam = 0 keeps only the pull term, which is nonnegative for the flat
    # surface and shrinks as same-class points are drawn together.
    surface = euclidean_surface(2)
    rng = np.random.default_rng(11)
    pts = _labeled_points(rng, n=12)
    _, trace = fit(surface, pts, objective_kind="mmc",
                   opt=OptimizerConfig(lam=0.0, max_iters=50), geo=GEO)
    assert trace[-1] >= 0.0
    assert trace[-1] < trace[0]


def test_fit_first_trace_row_is_identity_objective():
    surface = euclidean_surface(2)
    rng = np.random.default_rng(12)
    pts = _labeled_points(rng)
    pairs = build_pair_sets(pts.labels)
    lam = 1.0
    _, trace = fit(surface, pts, objective_kind="mmc",
                   opt=OptimizerConfig(lam=lam, max_iters=5), geo=GEO)
    # MMC projects the start onto the sqrt(d) Frobenius sphere, which leaves
    # the identity unchanged in 2-d.
    assert trace[0] == pytest.approx(
        mmc_objective(surface, np.eye(2), pts, pairs, lam), abs=1e-9)


def test_fit_input_validation():
    surface = euclidean_surface(2)
    pts = BasePointSet(np.zeros((4, 2)))
    with pytest.raises(InputError):
        fit(surface, pts)  # unlabeled
    with pytest.raises(InputError):
        fit(surface, BasePointSet(np.zeros((4, 3)), labels=[0, 0, 1, 1]))
    with pytest.raises(InputError):
        fit(surface, BasePointSet(np.zeros((4, 2)), labels=[0, 0, 1, 1]),
            objective_kind="nonsense")
    with pytest.raises(InputError):
        fit(helicoid_surface(), BasePointSet(np.zeros((4, 2)), labels=[0, 0, 1, 1]),
            gradient="analytic")


def test_linear_transform_validation():
    with pytest.raises(InputError):
        LinearTransform(np.zeros((2, 3)))
    with pytest.raises(InputError):
        LinearTransform(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    t = LinearTransform(np.eye(3) * 2.0)
    assert t.dim == 3
    assert t.quadratic_form_norm() == pytest.approx(4.0 * np.sqrt(3), abs=1e-12)


def test_optimizer_config_validation():
    with pytest.raises(InputError):
        OptimizerConfig(lam=-0.1)
    with pytest.raises(InputError):
        OptimizerConfig(max_iters=0)
    OptimizerConfig(lam=0.0)  # pull-only is allowed


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_transformed_distance_symmetry(seed):
    surface = hyperboloid_surface(2)
    rng = np.random.default_rng(seed)
    L = np.eye(2) + 0.2 * rng.normal(0, 1, (2, 2))
    x, y = rng.uniform(-2, 2, (2, 2))
    assert transformed_distance(surface, L, x, y) == transformed_distance(
        surface, L, y, x)
