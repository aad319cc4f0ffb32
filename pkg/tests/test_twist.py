import numpy as np
import pytest

from twistbound import geometry as geo
from twistbound import model as mdl
from twistbound import twist as tw
from twistbound.errors import ModeError, TwistSingularError
from twistbound.regions import Box


def flat_model(dim=1, V="0", lo=-2.0, hi=2.0, n=41):
    return mdl.ModelSpec(geo.euclidean(dim), V,
                         Box((lo,) * dim, (hi,) * dim, (n,) * dim))


OU = mdl.ModelSpec(geo.euclidean(1), "x**2/2", Box((-6,), (6,), (121,)))


def test_identity_twist_reduces_to_curvature():
    m = mdl.ModelSpec(geo.euclidean(2), "(x**2+y**2)/2",
                      Box((-3, -3), (3, 3), (11, 11)))
    ev = tw.twist_eval(m, tw.TwistSpec.identity(), [0.4, -1.0])
    assert np.array_equal(ev.b, np.eye(2))
    assert np.array_equal(ev.bstar, np.eye(2))
    assert np.max(np.abs(ev.nabla_bstar)) == 0.0
    assert np.max(np.abs(ev.defect)) == 0.0
    assert np.max(np.abs(ev.penalty)) == 0.0
    assert np.allclose(ev.potential, np.eye(2), atol=1e-14)
    assert np.allclose(ev.similar, np.eye(2), atol=1e-14)


def test_scalar_twist_exponential_flat():
    # lambda = e^{-x} on euclidean(1), V = 0: defect vanishes and the
    # potential is -(lambda''/lambda) = -1 at every point
    m = flat_model()
    twist = tw.TwistSpec.scalar("exp(-x)")
    for x in (-1.0, 0.0, 1.3):
        ev = tw.twist_eval(m, twist, [x])
        assert np.max(np.abs(ev.defect)) == 0.0
        assert ev.potential[0, 0] == pytest.approx(-1.0, abs=1e-12)
        assert ev.similar[0, 0] == pytest.approx(-1.0, abs=1e-12)


def test_shear_twist_hand_values():
    m = flat_model(2)
    twist = tw.TwistSpec.shear("x")
    ev = tw.twist_eval(m, twist, [0.7, -0.2])
    assert np.allclose(ev.bstar, [[1, 0.7], [0, 1]])
    assert np.allclose(ev.defect[0], [[0, -1], [1, 0]], atol=1e-13)
    assert np.allclose(ev.defect[1], np.zeros((2, 2)), atol=1e-13)
    assert np.allclose(ev.penalty, 0.25 * np.eye(2), atol=1e-13)


def test_twist_eval_fd_matches_symbolic_shear():
    m = mdl.ModelSpec(geo.euclidean(2), "(x**2+y**2)/2",
                      Box((-2, -2), (2, 2), (9, 9)))
    twist = tw.TwistSpec.shear("x")
    a = tw.twist_eval(m, twist, [0.5, 0.3])
    b = tw.twist_eval_fd(m, twist, [0.5, 0.3])
    for name in ("nabla_bstar", "defect", "penalty", "tensor_lap",
                 "potential", "similar"):
        assert np.allclose(getattr(a, name), getattr(b, name), atol=1e-6), name


def test_tensor_laplacian_constant_twist_flat():
    m = flat_model(2)
    twist = tw.TwistSpec.constant([[2.0, 1.0], [0.5, 3.0]])
    assert np.allclose(tw.tensor_laplacian(m, twist, [0.3, 0.4]),
                       np.zeros((2, 2)), atol=1e-13)


def test_tensor_laplacian_scalar_quartic():
    # lambda = e^{-x^2/2}, V = x^4/4: (B^{-1})* Lpar(B*) = (L lambda / lambda) I
    # with L lambda / lambda = (x^2 - 1) + x^4
    m = mdl.ModelSpec(geo.euclidean(1), "x**4/4", Box((-1,), (1,), (41,)))
    twist = tw.TwistSpec.scalar("exp(-x**2/2)")
    for x in (-0.8, 0.0, 0.5):
        ev = tw.twist_eval(m, twist, [x])
        val = (np.linalg.inv(ev.bstar) @ ev.tensor_lap)[0, 0]
        assert val == pytest.approx((x ** 2 - 1) + x ** 4, abs=1e-12)
        fd = tw.twist_eval_fd(m, twist, [x])
        val_fd = (np.linalg.inv(fd.bstar) @ fd.tensor_lap)[0, 0]
        assert val_fd == pytest.approx(val, abs=1e-5)


def test_bound_scan_ou_identity():
    rep = tw.bound_scan(OU, tw.TwistSpec.identity(), mode="plain")
    assert rep.rho_b == pytest.approx(1.0, abs=1e-12)
    assert rep.rho_tilde_b == pytest.approx(1.0, abs=1e-12)
    assert rep.defect_norm == 0.0


def test_bound_scan_quartic_scalar_twist():
    # S_B = 3x^2 - (x^2 - 1 + x^4) = 2x^2 + 1 - x^4, minimized at x = 0 on [-1, 1]
    m = mdl.ModelSpec(geo.euclidean(1), "x**4/4", Box((-1,), (1,), (81,)))
    rep = tw.bound_scan(m, tw.TwistSpec.scalar("exp(-x**2/2)"), mode="plain")
    assert rep.rho_b == pytest.approx(1.0, abs=1e-10)
    assert abs(rep.minimizer_rho_b[0]) < 1e-5


def test_bound_scan_tilde_shear_2d_gaussian():
    # S_B = [[1, x], [0, 1]]; (S_B)^s - N_B = [[3/4, x/2], [x/2, 3/4]]
    # infimum of smallest eigenvalue over [-2, 2]^2 is 3/4 - 1 = -1/4
    m = mdl.ModelSpec(geo.euclidean(2), "(x**2+y**2)/2",
                      Box((-2, -2), (2, 2), (21, 21)))
    twist = tw.TwistSpec.shear("x")
    rep = tw.bound_scan(m, twist, mode="tilde")
    assert rep.rho_b is None
    assert rep.rho_tilde_b == pytest.approx(-0.25, abs=1e-10)
    # independent brute-force assembly from finite-difference tensors
    grid = m.region.grid()
    t = tw.assemble_fd(m, lambda q: twist.evaluator(m).bstar(q), grid)
    s = 0.5 * (t["similar"] + np.swapaxes(t["similar"], 1, 2)) - t["penalty"]
    brute = float(np.min(np.linalg.eigvalsh(s)[:, 0]))
    assert rep.rho_tilde_b == pytest.approx(brute, abs=1e-5)


def test_bound_scan_plain_refuses_nonzero_defect():
    m = flat_model(2)
    with pytest.raises(ModeError):
        tw.bound_scan(m, tw.TwistSpec.shear("x"), mode="plain")


def test_symmetry_criterion():
    m = flat_model(2)
    assert tw.symmetry_criterion(OU, tw.TwistSpec.scalar("exp(-x**2/2)")).holds
    assert tw.symmetry_criterion(m, tw.TwistSpec.constant([[1, 2], [0, 1]])).holds
    rep = tw.symmetry_criterion(m, tw.TwistSpec.shear("x"))
    assert not rep.holds
    assert rep.residual == pytest.approx(np.sqrt(2), abs=1e-8)
    assert rep.witness is not None


def test_similarity_preserves_eigenvalues():
    m = mdl.ModelSpec(geo.euclidean(2), "x**2 + 2*y**2 + x*y/2",
                      Box((-2, -2), (2, 2), (7, 7)))
    twist = tw.TwistSpec.matrix([["1 + x**2/4", "y/3"], ["0", "2 + cos(x)"]])
    rng = np.random.default_rng(5)
    pts = rng.uniform(-2, 2, (20, 2))
    ev = twist.evaluator(m)
    t = ev.tensors(pts)
    curv = m.bakry_emery(pts)
    for k in range(20):
        a = np.sort(np.linalg.eigvals(t["conjugated"][k]).real)
        b = np.sort(np.linalg.eigvalsh(curv[k]))
        assert np.allclose(a, b, atol=1e-8)


def test_penalty_psd_and_zero_iff_symmetric():
    m = flat_model(2)
    twist = tw.TwistSpec.matrix([["1", "x*y"], ["sin(x)", "2"]])
    pts = np.random.default_rng(3).uniform(-1.5, 1.5, (30, 2))
    t = twist.evaluator(m).tensors(pts)
    eigs = np.linalg.eigvalsh(t["penalty"])
    assert np.min(eigs) > -1e-10
    dn = np.sqrt(np.einsum("njab,njab->n", t["defect"], t["defect"]))
    pn = np.sqrt(np.einsum("nab,nab->n", t["penalty"], t["penalty"]))
    assert np.all((dn < 1e-12) == (pn < 1e-12))


def test_identity_bounds_match_rho():
    rep = tw.bound_scan(OU, tw.TwistSpec.identity(), mode="plain")
    rho = mdl.rho_inf(OU)
    assert abs(rep.rho_b - rho) < 1e-10
    assert abs(rep.rho_tilde_b - rho) < 1e-10


def test_constant_orthogonal_twist_preserves_bound():
    m = mdl.ModelSpec(geo.euclidean(2), "x**2 + 5*y**2/2",
                      Box((-3, -3), (3, 3), (13, 13)))
    th = 0.7
    q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    rep = tw.bound_scan(m, tw.TwistSpec.constant(q), mode="plain")
    base = tw.bound_scan(m, tw.TwistSpec.identity(), mode="plain")
    assert rep.rho_b == pytest.approx(base.rho_b, abs=1e-8)


def test_singular_twist_raises_with_condition_number():
    m = flat_model(1, lo=-1, hi=1, n=21)
    twist = tw.TwistSpec.scalar("x")  # vanishes at x = 0
    with pytest.raises(TwistSingularError):
        tw.bound_scan(m, twist, mode="tilde")


def test_tilde_gate_reports_lower_bound():
    m = mdl.ModelSpec(geo.euclidean(2), "(x**2+y**2)/2",
                      Box((-2, -2), (2, 2), (15, 15)))
    gate = tw.hypothesis_gate(m, tw.TwistSpec.shear("x"), mode="tilde")
    assert gate.ok
    assert gate.epsilon == 0.1
    # field is [[1 - 1.1/4, x/2], [x/2, 1 - 1.1/4]] - min eig = 0.725 - 1
    assert gate.lower_bound == pytest.approx(0.725 - 1.0, abs=1e-10)
    plain = tw.hypothesis_gate(m, tw.TwistSpec.shear("x"), mode="plain")
    assert not plain.ok


def test_scalar_family_identity_on_double_well():
    # S_B for B = lambda id equals curvature - (L lambda / lambda) id
    m = mdl.ModelSpec(geo.euclidean(1), "(x**2-1)**2", Box((-2,), (2,), (41,)))
    twist = tw.TwistSpec.scalar("exp(-x**2/2)")
    for x in (-1.2, 0.0, 0.9):
        ev = tw.twist_eval(m, twist, [x])
        lam, xv = np.exp(-x ** 2 / 2), x
        lam2 = (xv ** 2 - 1) * lam
        lamp = -xv * lam
        llam = lam2 - (4 * xv ** 3 - 4 * xv) * lamp
        expected = (12 * xv ** 2 - 4) - llam / lam
        assert ev.similar[0, 0] == pytest.approx(expected, abs=1e-6)


def test_twisted_metrics_from_eval():
    m = flat_model(2)
    ev = tw.twist_eval(m, tw.TwistSpec.constant([[2, 0], [0, 1]]), [0.0, 0.0])
    # |v|_B^2 = |B^{-1} v|^2: v = (2, 0) -> B^{-1} v = (1, 0)
    assert ev.inner_vectors([2.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)
    # |alpha|_B^2 = |B* alpha|^2: alpha = (1, 0) -> B* alpha = (2, 0)
    assert ev.inner_forms([1.0, 0.0], [1.0, 0.0]) == pytest.approx(4.0)
