import numpy as np
import pytest
from scipy.stats import norm

from twistbound import geometry as geo
from twistbound import model as mdl
from twistbound import twist as tw
from twistbound import verify as vf
from twistbound.errors import PreconditionError
from twistbound.regions import Box


OU = mdl.ModelSpec(geo.euclidean(1), "x**2/2", Box((-8,), (8,), (801,)))
G2 = mdl.ModelSpec(geo.euclidean(2), "x**2 + 5*y**2/2",
                   Box((-5, -3.5), (5, 3.5), (301, 201)))
DW = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2", Box((-3,), (3,), (241,)))


def test_brascamp_lieb_equality_ou():
    rep = vf.check_variance_inequality(OU, None, "x", "brascamp-lieb")
    assert rep.passed
    assert rep.lhs == pytest.approx(1.0, abs=1e-8)
    assert rep.rhs == pytest.approx(1.0, abs=1e-8)


def test_brascamp_lieb_equality_2d_gaussian():
    rep = vf.check_variance_inequality(G2, None, "x", "brascamp-lieb")
    assert rep.passed
    assert rep.lhs == pytest.approx(0.5, abs=1e-6)
    assert rep.rhs == pytest.approx(0.5, abs=1e-6)


def test_variance_inequality_constant_function():
    rep = vf.check_variance_inequality(OU, None, "2", "brascamp-lieb")
    assert rep.passed
    assert rep.lhs == pytest.approx(0.0, abs=1e-12)
    assert rep.rhs == pytest.approx(0.0, abs=1e-12)


def test_poincare_battery_2d():
    for f in vf.default_test_functions(2):
        rep = vf.check_variance_inequality(G2, None, f, "poincare")
        assert rep.passed, f
        assert rep.slack >= 0, f
        assert rep.details["rho"] == pytest.approx(2.0, abs=1e-10)


def test_brascamp_lieb_hypothesis_violation_on_double_well():
    rep = vf.check_variance_inequality(DW, None, "x", "brascamp-lieb")
    assert rep.hypothesis_violation is not None
    assert not rep.passed


def test_poincare_tilde_mode_with_shear():
    m = mdl.ModelSpec(geo.euclidean(2), "2*(x**2 + y**2)",
                      Box((-3, -3), (3, 3), (161, 161)))
    twist = tw.TwistSpec.shear("x/4")
    rep = vf.check_variance_inequality(m, twist, "sin(x)", "brascamp-lieb",
                                       mode="tilde")
    assert rep.hypothesis_violation is None
    assert rep.passed


def test_asymmetric_bl_equality():
    rep = vf.check_asymmetric_bl(OU, "x", "x")
    assert rep.passed
    assert rep.lhs == pytest.approx(1.0, abs=1e-6)
    assert rep.rhs == pytest.approx(1.0, abs=1e-6)


def test_asymmetric_bl_stein_value():
    rep = vf.check_asymmetric_bl(OU, "x", "sin(x)")
    assert rep.passed
    assert rep.lhs == pytest.approx(np.exp(-0.5), abs=1e-6)
    assert rep.rhs == pytest.approx(1.0, abs=1e-8)


def test_asymmetric_bl_constant():
    rep = vf.check_asymmetric_bl(OU, "5", "x")
    assert rep.passed
    assert rep.lhs == pytest.approx(0.0, abs=1e-10)


def test_concentration_normal_tails():
    reps = vf.check_concentration(OU, "x", [0.5, 1.0, 2.0])
    assert all(r.passed for r in reps)
    lhs_expected = 2 * (1 - norm.cdf(1.0))
    r1 = reps[1]
    assert r1.lhs == pytest.approx(lhs_expected, abs=2e-2)
    assert r1.rhs == pytest.approx(2 * np.exp(-0.5), abs=1e-12)
    assert all(r.slack > 0 for r in reps)


def test_concentration_r_zero_trivial():
    (rep,) = vf.check_concentration(OU, "x", [0.0])
    assert rep.lhs <= 1.0
    assert rep.rhs == 2.0
    assert rep.passed


def test_concentration_tanh_passes_gate():
    reps = vf.check_concentration(OU, "tanh(x)", [0.5])
    assert reps[0].passed
    assert reps[0].slack > 0


def test_concentration_rejects_non_lipschitz():
    with pytest.raises(PreconditionError):
        vf.check_concentration(OU, "2*x", [1.0])


def test_phi_decay_ou_identity_exact():
    reps = vf.check_phi_decay(OU, None, "x", [0.0, 0.25, 0.5, 1.0],
                              n=400, h=1e-2, seed=3)
    for rep, t in zip(reps, [0.0, 0.25, 0.5, 1.0]):
        assert rep.passed
        assert rep.lhs == pytest.approx(np.exp(-2 * t), rel=1e-6)
        assert rep.rhs == pytest.approx(np.exp(-2 * t), rel=1e-10)


def test_phi_decay_twisted_double_well():
    twist = tw.TwistSpec.scalar("exp(-2.25*x**2 + 0.625*x**4)")
    reps = vf.check_phi_decay(DW, twist, "sin(x)", [0.25, 0.5],
                              n=1500, h=5e-3, seed=5)
    assert all(r.passed for r in reps)
    assert all(r.details["rho"] > 0 for r in reps)


def test_matrix_lemma():
    rep = vf.check_matrix_lemma(dim=8, n_trials=1000, seed=0)
    assert rep.passed
    assert rep.lhs <= 1e-10
    scalar = vf.check_matrix_lemma(dim=1, n_trials=50, seed=1)
    assert scalar.passed


def test_gronwall_ou():
    rep = vf.check_gronwall(OU, t=0.5, h=1e-3, n=500, seed=7, x0=[1.0])
    assert rep.passed
    assert rep.lhs == pytest.approx(1.0, abs=1e-10)


def test_gronwall_double_well_envelope():
    rep = vf.check_gronwall(DW, t=0.5, h=1e-3, n=1000, seed=9, x0=[0.0])
    assert rep.passed
    assert rep.details["rho"] == pytest.approx(-4.0, abs=1e-9)
