"""Charts, metrics, jacobians and closed-form distances."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfml.errors import DomainError, InputError
from surfml.surfaces import (
    BasePointSet,
    euclidean_surface,
    fd_jacobian,
    get_surface,
    helicoid_surface,
    hyperboloid_integrand,
    hyperboloid_surface,
    monge_patch_surface,
    register_monge_patch,
)

ALL_SPECS = ["euclidean:2", "euclidean:3", "hyperboloid:2", "hyperboloid:3",
             "helicoid", "monge:sinusoid", "monge:paraboloid", "monge:flat"]


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_inverse_roundtrip(spec):
    surface = get_surface(spec)
    rng = np.random.default_rng(11)
    B = rng.uniform(-5, 5, (1000, surface.base_dim))
    B = B[np.linalg.norm(B, axis=1) <= 5]
    ambient = np.atleast_2d(surface.map(B))
    for b, s in zip(B, ambient):
        back = surface.inverse_map(s)
        assert np.allclose(back, b, atol=1e-9)


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_jacobian_matches_finite_differences(spec):
    surface = get_surface(spec)
    rng = np.random.default_rng(12)
    for _ in range(100):
        b = rng.uniform(-2, 2, surface.base_dim)
        J = surface.jacobian(b)
        J_fd = fd_jacobian(lambda x: np.atleast_2d(surface.map(x))[0], b)
        assert np.allclose(J, J_fd, atol=1e-5)


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_jacobian_batch_matches_single(spec):
    surface = get_surface(spec)
    rng = np.random.default_rng(13)
    B = rng.uniform(-2, 2, (20, surface.base_dim))
    batch = surface.jacobian_batch(B)
    for i, b in enumerate(B):
        assert np.allclose(batch[i], surface.jacobian(b), atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_hyperboloid_membership(d):
    # map(b) = (u, w) lies on the hyperboloid sheet: u'u - w^2 = -1.
    surface = hyperboloid_surface(d)
    rng = np.random.default_rng(14)
    B = rng.uniform(-5, 5, (200, d))
    S = np.atleast_2d(surface.map(B))
    vals = np.sum(S[:, :d] ** 2, axis=1) - S[:, d] ** 2
    assert np.allclose(vals, -1.0, atol=1e-9)


def test_hyperboloid_closed_form_against_direct_formula():
    # Independent evaluation of arccosh(-s1' G s2) from the base coordinates.
    surface = hyperboloid_surface(2)
    rng = np.random.default_rng(15)
    for _ in range(200):
        b1, b2 = rng.uniform(-3, 3, (2, 2))
        s1, s2 = np.atleast_2d(surface.map(np.vstack([b1, b2])))
        expected = np.arccosh(max(
            np.sqrt((1 + b1 @ b1) * (1 + b2 @ b2)) - b1 @ b2, 1.0))
        got = surface.closed_form_distance(s1, s2)
        assert got == pytest.approx(expected, abs=1e-9)
        assert surface.closed_form_distance(s2, s1) == got


def test_euclidean_closed_form_is_norm():
    surface = euclidean_surface(3)
    rng = np.random.default_rng(16)
    for _ in range(100):
        x, y = rng.normal(0, 2, (2, 3))
        assert surface.closed_form_distance(x, y) == pytest.approx(
            np.linalg.norm(x - y), abs=1e-12)


@pytest.mark.parametrize("spec", ["euclidean:2", "hyperboloid:2"])
def test_closed_form_pairwise_matches_distance(spec):
    surface = get_surface(spec)
    rng = np.random.default_rng(17)
    B = rng.uniform(-2, 2, (15, 2))
    S = np.atleast_2d(surface.map(B))
    mat = surface.closed_form_pairwise(S, S)
    for i in range(len(S)):
        for j in range(len(S)):
            if i == j:
                # Exact zeros on bit-identical points are guaranteed by the
                # distance entry points, not by the raw pairwise kernel.
                assert mat[i, j] == pytest.approx(0.0, abs=1e-7)
            else:
                assert mat[i, j] == pytest.approx(
                    surface.closed_form_distance(S[i], S[j]), abs=1e-9)


def test_distance_identity_is_zero():
    for spec in ("euclidean:2", "hyperboloid:2"):
        surface = get_surface(spec)
        s = np.atleast_2d(surface.map(np.array([[0.7, -1.3]])))[0]
        assert surface.closed_form_distance(s, s) == 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_hyperboloid_triangle_inequality(seed):
    surface = hyperboloid_surface(2)
    rng = np.random.default_rng(seed)
    S = np.atleast_2d(surface.map(rng.uniform(-2, 2, (3, 2))))
    d01 = surface.closed_form_distance(S[0], S[1])
    d12 = surface.closed_form_distance(S[1], S[2])
    d02 = surface.closed_form_distance(S[0], S[2])
    assert d02 <= d01 + d12 + 1e-9


def test_hyperboloid_integrand_matches_generic_quadratic_form():
    surface = hyperboloid_surface(2)
    G = surface.ambient_metric
    rng = np.random.default_rng(18)
    for _ in range(1000):
        kappa = rng.uniform(-3, 3, 2)
        kdot = rng.uniform(-3, 3, 2)
        D = surface.jacobian(kappa)
        v = D @ kdot
        expected = np.sqrt(max(v @ G @ v, 0.0))
        assert hyperboloid_integrand(kappa, kdot) == pytest.approx(expected, abs=1e-10)


def test_hyperboloid_integrand_nonnegative_and_clamped():
    # For real inputs the radicand is provably nonnegative (Cauchy-Schwarz),
    # so the value is well defined and zero exactly for zero velocity.
    rng = np.random.default_rng(19)
    for _ in range(200):
        kappa = rng.uniform(-4, 4, 2)
        kdot = rng.uniform(-4, 4, 2)
        assert hyperboloid_integrand(kappa, kdot) >= 0.0
    assert hyperboloid_integrand(np.array([1.0, 2.0]), np.zeros(2)) == 0.0


def test_get_surface_errors():
    with pytest.raises(InputError):
        get_surface("torus")
    with pytest.raises(InputError):
        get_surface("euclidean:abc")
    with pytest.raises(InputError):
        get_surface("euclidean:0")
    with pytest.raises(InputError):
        get_surface("monge:unknown")


def test_register_monge_patch_roundtrip():
    register_monge_patch(
        "testridge",
        lambda: monge_patch_surface(
            h=lambda b: np.asarray(b, dtype=float)[..., 0] ** 3,
            d=2,
            grad_h=lambda b: np.array([3.0 * float(np.asarray(b)[0]) ** 2, 0.0]),
            name="monge:testridge",
        ),
    )
    surface = get_surface("monge:testridge")
    assert surface.ambient_dim == 3
    b = np.array([0.5, 1.0])
    assert np.allclose(surface.map(b), [0.5, 1.0, 0.125])


def test_base_point_set_validation():
    with pytest.raises(InputError):
        BasePointSet(points=np.zeros((3, 2)), labels=[0, 1])
    pts = BasePointSet(points=np.zeros((3, 2)), labels=[0, 1, 0])
    assert len(pts) == 3


def test_require_in_domain_message():
    surface = helicoid_surface()
    # helicoid domain is all of R^2; euclidean too. Use a bounded custom patch.
    bounded = monge_patch_surface(
        h=lambda b: 0.0 * np.asarray(b, dtype=float)[..., 0],
        d=2,
        domain_check=lambda b: bool(np.all(np.abs(b) < 1.0)),
        name="monge:bounded",
    )
    with pytest.raises(DomainError, match="outside base domain"):
        bounded.require_in_domain(np.array([2.0, 0.0]))
    surface.require_in_domain(np.array([100.0, -50.0]))
