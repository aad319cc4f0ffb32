import numpy as np
import pytest

from twistbound import geometry as geo
from twistbound import model as mdl
from twistbound import spectral as spc
from twistbound import twist as tw
from twistbound.regions import Box


def ou_model(npts=161):
    return mdl.ModelSpec(geo.euclidean(1), "x**2/2", Box((-8,), (8,), (npts,)))


def test_circle_gap():
    m = mdl.ModelSpec(geo.circle(), "0", Box((0,), (2 * np.pi,), (65,)))
    grid = spc.GridSpec((0,), (2 * np.pi,), (512,), periodic=(True,))
    res = spc.spectral_gap(spc.discretize(m, grid))
    assert abs(res.lambda1 - 1.0) < 1e-4
    assert res.lambda0 == pytest.approx(0.0, abs=1e-10)


def test_interval_neumann_gap():
    m = mdl.ModelSpec(geo.interval(0.0, 1.0), "0", Box((0,), (1,), (65,)))
    grid = spc.GridSpec((0,), (1,), (1000,))
    res = spc.spectral_gap(spc.discretize(m, grid))
    assert abs(res.lambda1 - np.pi ** 2) / np.pi ** 2 < 1e-3


def test_ou_gap():
    grid = spc.GridSpec((-8,), (8,), (1600,))
    res = spc.spectral_gap(spc.discretize(ou_model(), grid))
    assert abs(res.lambda1 - 1.0) < 1e-3


def test_double_well_gap_self_convergence():
    m = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2", Box((-3,), (3,), (161,)))
    grid = spc.GridSpec((-3,), (3,), (2000,))
    chk = spc.refinement_check(m, grid)
    assert not chk["under_resolved"]
    assert chk["rel_change"] < 1e-3


def test_2d_gaussian_gap_sparse_path():
    m = mdl.ModelSpec(geo.euclidean(2), "(x**2 + 4*y**2)/2",
                      Box((-8, -4), (8, 4), (41, 21)))
    grid = spc.GridSpec((-8, -4), (8, 4), (361, 181))
    res = spc.spectral_gap(spc.discretize(m, grid))
    assert abs(res.lambda1 - 1.0) < 1e-3


def test_torus_gap_2d():
    m = mdl.ModelSpec(geo.flat_torus(2), "0",
                      Box((0, 0), (2 * np.pi, 2 * np.pi), (9, 9)))
    grid = spc.GridSpec((0, 0), (2 * np.pi, 2 * np.pi), (48, 48),
                        periodic=(True, True))
    res = spc.spectral_gap(spc.discretize(m, grid))
    assert abs(res.lambda1 - 1.0) < 2e-3


def test_stiffness_invariants():
    grid = spc.GridSpec((-6,), (6,), (301,))
    disc = spc.discretize(ou_model(), grid)
    S = disc.stiffness.toarray()
    assert np.max(np.abs(S - S.T)) < 1e-12
    ones = np.ones(S.shape[0])
    assert np.max(np.abs(S @ ones)) < 1e-12
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = rng.standard_normal(S.shape[0])
        assert v @ S @ v >= -1e-10


def test_potential_shift_leaves_gap():
    grid = spc.GridSpec((-8,), (8,), (801,))
    a = spc.spectral_gap(spc.discretize(ou_model(), grid)).lambda1
    m2 = mdl.ModelSpec(geo.euclidean(1), "x**2/2 + 500", Box((-8,), (8,), (161,)))
    b = spc.spectral_gap(spc.discretize(m2, grid)).lambda1
    assert a == pytest.approx(b, rel=1e-9)


def test_integrate_mu_moments():
    m = ou_model(801)
    assert spc.integrate_mu(m, "1") == pytest.approx(1.0, abs=1e-14)
    assert spc.integrate_mu(m, "x**2") == pytest.approx(1.0, abs=1e-8)
    g2 = mdl.ModelSpec(geo.euclidean(2), "(x**2 + 4*y**2)/2",
                       Box((-8, -5), (8, 5), (321, 201)))
    assert spc.integrate_mu(g2, "x*y") == pytest.approx(0.0, abs=1e-10)


def test_integrate_mu_truncation_warning():
    m = mdl.ModelSpec(geo.euclidean(1), "x**2/2", Box((-1,), (1,), (101,)))
    with pytest.warns(UserWarning):
        res = spc.integrate_mu(m, "1", detail=True)
    assert res.truncation_warning


def test_variance_mu_gaussian():
    m = ou_model(801)
    assert spc.variance_mu(m, "x") == pytest.approx(1.0, abs=1e-8)


def test_optimize_ou_identity_is_optimal():
    m = mdl.ModelSpec(geo.euclidean(1), "x**2/2", Box((-6,), (6,), (121,)))
    fam = tw.TwistSpec.scalar_exp_poly(2)
    res = spc.optimize_twist(m, fam, mode="plain", budget=600, restarts=2,
                             gap_grid=spc.GridSpec((-8,), (8,), (1201,)))
    assert res.bound == pytest.approx(1.0, abs=1e-9)
    assert res.identity_bound == pytest.approx(1.0, abs=1e-12)
    assert res.bound <= res.lambda1 + 1e-6


def test_optimize_double_well_improves_and_sound():
    m = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2", Box((-3,), (3,), (121,)))
    fam = tw.TwistSpec.scalar_exp_poly(4)
    res = spc.optimize_twist(m, fam, mode="plain", budget=2000, restarts=4,
                             gap_grid=spc.GridSpec((-3,), (3,), (2000,)))
    assert res.identity_bound == pytest.approx(-4.0, abs=1e-8)
    assert res.bound > 0.0
    assert res.bound <= res.lambda1 + 1e-6
    assert res.bound >= res.identity_bound - 1e-12


def test_optimize_quartic_fixed_twist_bound():
    m = mdl.ModelSpec(geo.euclidean(1), "x**4/4", Box((-1,), (1,), (81,)))
    rep = tw.bound_scan(m, tw.TwistSpec.scalar("exp(-x**2/2)"), mode="plain")
    assert rep.rho_b == pytest.approx(1.0, abs=1e-6)
    assert mdl.rho_inf(m) == pytest.approx(0.0, abs=1e-12)
