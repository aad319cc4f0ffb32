import numpy as np
import pytest

from twistbound import geometry as geo
from twistbound.errors import DomainError


BUILTINS = {
    "euclidean2": geo.euclidean(2),
    "circle": geo.circle(),
    "torus": geo.flat_torus(2),
    "sphere2": geo.sphere2(),
    "hyperbolic": geo.hyperbolic_half_plane(),
    "interval": geo.interval(0.0, 1.0),
}


def random_domain_points(m, n, rng):
    lo = np.maximum(np.asarray(m.domain.lo), -3.0)
    hi = np.minimum(np.asarray(m.domain.hi), 3.0)
    lo = lo + 0.05 * (hi - lo)
    hi = hi - 0.05 * (hi - lo)
    return lo + (hi - lo) * rng.random((n, m.dimension))


def test_euclidean_metric_identity():
    m = geo.euclidean(2)
    assert np.array_equal(geo.metric_at(m, [0.3, -1.2]), np.eye(2))
    assert np.array_equal(geo.christoffel_at(m, [5.0, 2.0]), np.zeros((2, 2, 2)))
    assert np.array_equal(geo.ricci_sharp_at(m, [0.0, 0.0]), np.zeros((2, 2)))
    assert np.array_equal(geo.frame_at(m, [1.0, 1.0]), np.eye(2))


def test_sphere_metric_at_equator():
    m = geo.sphere2()
    g = geo.metric_at(m, [np.pi / 2, 0.0])
    assert np.allclose(g, np.diag([1.0, 1.0]), atol=1e-14)


def test_hyperbolic_metric():
    m = geo.hyperbolic_half_plane()
    g = geo.metric_at(m, [0.0, 2.0])
    assert np.allclose(g, np.diag([0.25, 0.25]), atol=1e-15)


def test_sphere_christoffel_value():
    m = geo.sphere2()
    Gam = geo.christoffel_at(m, [np.pi / 4, 1.0])
    # Gamma^theta_{phi phi} = -sin(t)cos(t) = -1/2 at t = pi/4
    assert Gam[0, 1, 1] == pytest.approx(-0.5, abs=1e-14)
    # Gamma^phi_{theta phi} = cot(theta) = 1
    assert Gam[1, 0, 1] == pytest.approx(1.0, abs=1e-14)


def test_sphere_ricci_is_identity():
    m = geo.sphere2()
    for th in (0.3, np.pi / 2, 2.5):
        R = geo.ricci_sharp_at(m, [th, 0.7])
        assert np.allclose(R, np.eye(2), atol=1e-12)


def test_hyperbolic_ricci_is_minus_identity():
    m = geo.hyperbolic_half_plane()
    for y in (0.5, 1.0, 3.0):
        R = geo.ricci_sharp_at(m, [0.3, y])
        assert np.allclose(R, -np.eye(2), atol=1e-12)


def test_sphere_frame_cholesky():
    m = geo.sphere2()
    E = geo.frame_at(m, [np.pi / 6, 0.0])
    assert np.allclose(E, np.diag([1.0, 2.0]), atol=1e-13)


def test_frame_orthonormalizes_random_spd():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        g_mat = A @ A.T + 3 * np.eye(3)
        m = geo.user_chart(3, lambda pts, g_mat=g_mat: np.broadcast_to(
            g_mat, (pts.shape[0], 3, 3)))
        E = geo.frame_at(m, [0.0, 0.0, 0.0])
        assert np.allclose(E.T @ g_mat @ E, np.eye(3), atol=1e-10)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtin_invariants_on_random_points(name):
    m = BUILTINS[name]
    rng = np.random.default_rng(42)
    pts = random_domain_points(m, 100, rng)
    g = m.metric(pts)
    E = m.frame(pts)
    res = np.einsum("nij,njk,nkl->nil", np.swapaxes(E, 1, 2), g, E) - np.eye(m.dimension)
    assert np.max(np.abs(res)) < 1e-10
    Gam = m.christoffel(pts)
    assert np.array_equal(Gam, np.swapaxes(Gam, 2, 3))
    R = m.ricci_sharp_frame(pts)
    assert np.max(np.abs(R - np.swapaxes(R, 1, 2))) < 1e-8


@pytest.mark.parametrize("name", ["circle", "torus"])
def test_flat_quotients_have_no_curvature(name):
    m = BUILTINS[name]
    rng = np.random.default_rng(3)
    pts = random_domain_points(m, 50, rng)
    assert np.max(np.abs(m.christoffel(pts))) == 0.0
    assert np.max(np.abs(m.ricci_sharp_frame(pts))) == 0.0


def test_user_chart_finite_difference_matches_sphere():
    analytic = geo.sphere2()
    fd = geo.user_chart(
        2, [["1", "0"], ["0", "sin(x)**2"]], coord_names=("x", "y"),
        domain=analytic.domain,
    )
    rng = np.random.default_rng(7)
    pts = np.stack([rng.uniform(0.4, np.pi - 0.4, 25), rng.uniform(0, 6, 25)], axis=1)
    assert np.max(np.abs(fd.christoffel(pts) - analytic.christoffel(pts))) < 1e-6
    assert np.max(np.abs(fd.ricci_sharp_frame(pts) -
                         analytic.ricci_sharp_frame(pts))) < 1e-5


def test_user_chart_finite_difference_matches_hyperbolic():
    analytic = geo.hyperbolic_half_plane()
    fd = geo.user_chart(
        2, [["1/y**2", "0"], ["0", "1/y**2"]], coord_names=("x", "y"),
        domain=analytic.domain,
    )
    rng = np.random.default_rng(11)
    pts = np.stack([rng.uniform(-2, 2, 25), rng.uniform(0.5, 3, 25)], axis=1)
    assert np.max(np.abs(fd.christoffel(pts) - analytic.christoffel(pts))) < 1e-5
    assert np.max(np.abs(fd.ricci_sharp_frame(pts) -
                         analytic.ricci_sharp_frame(pts))) < 1e-5


def test_out_of_domain_raises_named_error():
    m = geo.sphere2()
    with pytest.raises(DomainError) as err:
        geo.metric_at(m, [0.01, 0.0])
    assert "theta" in str(err.value)
    geo.metric_at(m, [0.2, 123.0])  # phi periodic: never out of domain


def test_tabulated_chart_interpolates_metric():
    xs = np.linspace(0.3, np.pi - 0.3, 41)
    ys = np.linspace(0.0, 2 * np.pi, 41)
    vals = np.zeros((41, 41, 2, 2))
    vals[..., 0, 0] = 1.0
    vals[..., 1, 1] = np.sin(xs)[:, None] ** 2
    m = geo.tabulated_chart(2, [xs, ys], vals)
    g = geo.metric_at(m, [np.pi / 2, 1.0])
    assert np.allclose(g, np.eye(2), atol=1e-6)
    ev = np.linalg.eigvalsh(m.metric(np.array([[1.0, 0.5], [2.0, 1.0]])))
    assert np.all(ev > 0)
