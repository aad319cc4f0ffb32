import numpy as np
import pytest
import sympy as sp

from twistbound import geometry as geo
from twistbound import model as mdl
from twistbound.regions import Box


def ou_model(lo=-6.0, hi=6.0, n=241):
    return mdl.ModelSpec(geo.euclidean(1), "x**2/2", Box((lo,), (hi,), (n,)))


def test_grad_hess_quadratic():
    m = mdl.ModelSpec(geo.euclidean(2), "(x**2 + y**2)/2",
                      Box((-5, -5), (5, 5), (21, 21)))
    g, H = mdl.grad_hess_V(m, [0.7, -1.3])
    assert np.allclose(g, [0.7, -1.3], atol=1e-14)
    assert np.allclose(H, np.eye(2), atol=1e-14)


def test_grad_hess_quartic_with_fd_crosscheck():
    m = mdl.ModelSpec(geo.euclidean(1), "x**4/4", Box((-2,), (2,), (41,)))
    g, H = mdl.grad_hess_V(m, [2.0])
    assert g[0] == pytest.approx(8.0, abs=1e-12)
    assert H[0, 0] == pytest.approx(12.0, abs=1e-12)
    fd = mdl.ModelSpec(geo.euclidean(1),
                       lambda pts: pts[:, 0] ** 4 / 4,
                       Box((-2,), (2,), (41,)))
    g2, H2 = mdl.grad_hess_V(fd, [2.0])
    assert g2[0] == pytest.approx(8.0, abs=1e-6)
    assert H2[0, 0] == pytest.approx(12.0, abs=1e-4)


def test_grad_hess_constant_potential_on_sphere():
    m = mdl.ModelSpec(geo.sphere2(), "0", Box((0.3, 0), (np.pi - 0.3, 6), (15, 15)))
    g, H = mdl.grad_hess_V(m, [1.0, 2.0])
    assert np.array_equal(g, np.zeros(2))
    assert np.array_equal(H, np.zeros((2, 2)))


def test_bakry_emery_ou():
    v = mdl.bakry_emery_at(ou_model(), [1.7])
    assert np.allclose(v.tensor, [[1.0]])
    assert v.smallest_eigenvalue == pytest.approx(1.0, abs=1e-14)


def test_bakry_emery_sphere_is_identity():
    m = mdl.ModelSpec(geo.sphere2(), "0", Box((0.3, 0), (np.pi - 0.3, 6), (15, 15)))
    v = mdl.bakry_emery_at(m, [0.9, 0.4])
    assert np.allclose(v.tensor, np.eye(2), atol=1e-12)
    assert v.smallest_eigenvalue == pytest.approx(1.0, abs=1e-12)


def test_bakry_emery_double_well_at_origin():
    m = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2", Box((-2,), (2,), (81,)))
    v = mdl.bakry_emery_at(m, [0.0])
    assert v.tensor[0, 0] == pytest.approx(-4.0, abs=1e-14)


def test_apply_L_ou():
    m = ou_model()
    assert mdl.apply_L(m, "x", [1.3]) == pytest.approx(-1.3, abs=1e-13)
    assert mdl.apply_L(m, "x**2", [1.5]) == pytest.approx(2 - 2 * 1.5 ** 2, abs=1e-12)
    assert mdl.apply_L(m, "3", [0.2]) == 0.0


def test_apply_L_matches_symbolic():
    m = ou_model()
    expr = mdl.L_expr(m, "sin(x)")
    x = m.manifold.coords[0]
    expected = -sp.sin(x) - x * sp.cos(x)
    assert sp.simplify(expr - expected) == 0


def test_rho_inf_values():
    assert mdl.rho_inf(ou_model()) == pytest.approx(1.0, abs=0)
    quartic = mdl.ModelSpec(geo.euclidean(1), "x**4/4", Box((-2,), (2,), (81,)))
    assert mdl.rho_inf(quartic) == pytest.approx(0.0, abs=1e-12)
    dw = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2", Box((-2,), (2,), (81,)))
    r = mdl.rho_inf(dw, detail=True)
    assert r.value == pytest.approx(-4.0, abs=1e-10)
    assert abs(r.minimizer[0]) < 1e-4
    assert r.caveat == "grid-infimum"


def test_rho_inf_invariant_under_constant_shift():
    a = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2", Box((-2,), (2,), (81,)))
    b = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2 + 17", Box((-2,), (2,), (81,)))
    assert mdl.rho_inf(a) == pytest.approx(mdl.rho_inf(b), abs=1e-12)


def test_bakry_emery_symmetric_on_grid():
    m = mdl.ModelSpec(geo.sphere2(), "sin(theta)*cos(phi)",
                      Box((0.3, 0.2), (np.pi - 0.3, 6.0), (12, 12)))
    tensors = m.bakry_emery(m.region.grid())
    asym = np.max(np.abs(tensors - np.swapaxes(tensors, 1, 2)))
    assert asym < 1e-8


def test_mu_symmetry_of_generator():
    # quadrature of  int (Lf) g dmu  against  -int f' g' dmu  on OU
    m = ou_model(-8.0, 8.0, 2001)
    f = mdl.ScalarField("sin(x)*exp(-x**2/2)", m.manifold)
    g = mdl.ScalarField("cos(2*x)*exp(-x**2/4)", m.manifold)
    xs = m.region.grid()
    w = m.mu_weights(xs)
    h = xs[1, 0] - xs[0, 0]
    w_trap = w.copy()
    w_trap[0] *= 0.5
    w_trap[-1] *= 0.5
    z = w_trap.sum() * h
    lf = np.array([mdl.apply_L(m, f, x) for x in xs[:: 40]])
    gv = g.value(xs[::40])
    # dense quadrature for both sides
    lf_dense = np.empty(xs.shape[0])
    V = m.V(xs)
    fp = f.grad_coords(xs)[:, 0]
    fpp = f.hess_coords(xs)[:, 0, 0]
    lf_dense = fpp - xs[:, 0] * fp
    lhs = np.sum(w_trap * lf_dense * g.value(xs)) * h / z
    rhs = -np.sum(w_trap * fp * g.grad_coords(xs)[:, 0]) * h / z
    assert lhs == pytest.approx(rhs, abs=1e-6)
    # spot check that apply_L agrees with the dense symbolic evaluation
    assert np.allclose(lf, lf_dense[::40], atol=1e-10)
