"""Inequality verification harness.

Every theorem-level inequality is checked against an independent
quadrature, Monte-Carlo, or dense-eigensolver oracle and reported with
its slack.  Hypothesis gates are hard: a check whose positivity or
symmetry precondition fails on the grid comes back as a
hypothesis-violation report, never as a silent pass or fail, and
quadrature truncation warnings are surfaced in the report details.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ModeError, PreconditionError
from .model import ModelSpec, make_field, rho_inf
from .pathsim import PathEngine
from .semigroup import OneFormField
from .spectral import integrate_mu, variance_mu
from .twist import TwistSpec, bound_scan, hypothesis_gate

LIPSCHITZ_SLACK = 1e-8


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    slack: float
    tolerance: float
    passed: bool
    method: str
    hypothesis_violation: str | None = None
    details: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name, lhs, rhs, tolerance, method, **details):
        return cls(name=name, lhs=float(lhs), rhs=float(rhs),
                   slack=float(rhs - lhs), tolerance=float(tolerance),
                   passed=bool(lhs <= rhs + tolerance), method=method,
                   details=details)

    @classmethod
    def violation(cls, name, reason, method, **details):
        return cls(name=name, lhs=np.nan, rhs=np.nan, slack=np.nan,
                   tolerance=0.0, passed=False, method=method,
                   hypothesis_violation=reason, details=details)


def _quad_tol(rhs):
    return 1e-8 * max(1.0, abs(rhs))


def check_variance_inequality(model: ModelSpec, twist: TwistSpec | None, f,
                              kind, mode="plain", params=None, grid=None,
                              bound_value=None) -> InequalityReport:
    """Poincare (variance against 1/rho_B energy) or generalized
    Brascamp-Lieb (variance against the inverse bound field energy)."""
    if kind not in ("poincare", "brascamp-lieb"):
        raise ConfigError(f"unknown inequality kind {kind!r}")
    twist = twist or TwistSpec.identity()
    name = f"{kind}[{mode}]"
    gate = hypothesis_gate(model, twist, mode, params=params)
    if not gate.ok:
        raise ModeError(f"{name}: {gate.detail}")

    fld = make_field(f, model.manifold)
    var = variance_mu(model, fld, grid, detail=True)
    details = {"truncation_warning": var.truncation_warning,
               "defect_norm": gate.defect_norm}

    if kind == "poincare":
        if bound_value is None:
            rep = bound_scan(model, twist, mode, params=params)
            bound_value = rep.value
        details["rho"] = bound_value
        if bound_value <= 0:
            return InequalityReport.violation(
                name, f"certified bound {bound_value:.6g} is not positive",
                "quadrature", **details)
        rhs = integrate_mu(
            model, lambda p: np.einsum("ni,ni->n", fld.grad_frame(p),
                                       fld.grad_frame(p)), grid) / bound_value
    else:
        ev = twist.evaluator(model)

        def check_pd(pts):
            t = ev.tensors(pts, params)
            s = 0.5 * (t["similar"] + np.swapaxes(t["similar"], -1, -2))
            if mode == "tilde":
                s = s - t["penalty"]
            return s

        probe = check_pd(model.region.grid())
        min_eig = float(np.min(np.linalg.eigvalsh(probe)[:, 0]))
        details["min_eig"] = min_eig
        if min_eig <= 0:
            return InequalityReport.violation(
                name, f"bound field not positive definite on the grid "
                      f"(min eigenvalue {min_eig:.6g})", "quadrature", **details)

        def integrand(pts):
            df = fld.grad_frame(pts)
            s = check_pd(pts)
            sol = np.linalg.solve(s, df[..., None])[..., 0]
            return np.einsum("ni,ni->n", df, sol)

        rhs = integrate_mu(model, integrand, grid)

    return InequalityReport.build(name, var.value, rhs, _quad_tol(rhs),
                                  "quadrature", **details)


def check_asymmetric_bl(model: ModelSpec, f, g, grid=None) -> InequalityReport:
    """Covariance against (1/rho) sup|dg| int |df| dmu."""
    name = "asymmetric-brascamp-lieb"
    rho = rho_inf(model)
    if rho <= 0:
        return InequalityReport.violation(
            name, f"curvature bound rho = {rho:.6g} is not positive",
            "quadrature", rho=rho)
    ff = make_field(f, model.manifold)
    gg = make_field(g, model.manifold)
    mean_f = integrate_mu(model, lambda p: ff.value(p), grid)
    mean_g = integrate_mu(model, lambda p: gg.value(p), grid)
    cov = integrate_mu(
        model, lambda p: (ff.value(p) - mean_f) * (gg.value(p) - mean_g), grid)
    int_df = integrate_mu(
        model, lambda p: np.linalg.norm(ff.grad_frame(p), axis=1), grid, detail=True)
    qgrid = grid.grid() if grid is not None and hasattr(grid, "grid") \
        else model.region.grid()
    sup_dg = float(np.max(np.linalg.norm(gg.grad_frame(qgrid), axis=1)))
    rhs = sup_dg * int_df.value / rho
    return InequalityReport.build(
        name, abs(cov), rhs, _quad_tol(rhs), "quadrature", rho=rho,
        covariance=cov, sup_dg=sup_dg,
        truncation_warning=int_df.truncation_warning)


def check_concentration(model: ModelSpec, f, r_grid, grid=None):
    """Gaussian concentration of mu for 1-Lipschitz f at the given radii."""
    name = "concentration"
    ff = make_field(f, model.manifold)
    qgrid = model.region.grid()
    sup_df = float(np.max(np.linalg.norm(ff.grad_frame(qgrid), axis=1)))
    if sup_df > 1.0 + LIPSCHITZ_SLACK:
        k = int(np.argmax(np.linalg.norm(ff.grad_frame(qgrid), axis=1)))
        raise PreconditionError(
            f"field is not 1-Lipschitz: sup |df| = {sup_df:.6g}",
            witness=qgrid[k])
    rho = rho_inf(model)
    if rho <= 0:
        return [InequalityReport.violation(
            name, f"curvature bound rho = {rho:.6g} is not positive",
            "quadrature", rho=rho)]
    mean_f = integrate_mu(model, lambda p: ff.value(p), grid)
    out = []
    for r in r_grid:
        tail = integrate_mu(
            model,
            lambda p: (np.abs(ff.value(p) - mean_f) > r).astype(float), grid)
        rhs = 2.0 * np.exp(-rho * r ** 2 / 2.0)
        out.append(InequalityReport.build(
            f"{name}[r={r:g}]", tail, rhs, _quad_tol(rhs), "quadrature",
            rho=rho, sup_df=sup_df))
    return out


def check_phi_decay(model: ModelSpec, twist: TwistSpec | None, f, t_grid,
                    n, h, seed, mode="plain", params=None, x_nodes=9,
                    rho_value=None, bias_allowance=0.05):
    """Monte-Carlo decay envelope of the twisted 1-form energy.

    phi(t), the mu-average of the squared twisted norm of the Q-evolved
    twisted differential, is estimated by quadrature over a coarse node
    grid of squared Monte-Carlo means (nested estimator; the upward bias
    is estimated from per-path variances and reported).  Compared against
    e^{-2 rho t} phi(0) with tolerance 3 stderr + the bias allowance.
    """
    twist = twist or TwistSpec.identity()
    gate = hypothesis_gate(model, twist, mode, params=params)
    if not gate.ok:
        raise ModeError(f"phi-decay: {gate.detail}")
    if rho_value is None:
        rho_value = bound_scan(model, twist, mode, params=params).value

    man = model.manifold
    d = man.dimension
    fld = make_field(f, man)
    ev = twist.evaluator(model)

    # coarse quadrature nodes against mu
    axes = [np.linspace(lo, hi, x_nodes) for lo, hi in
            zip(model.region.lo, model.region.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    wts = model.mu_weights(nodes)
    trap = np.ones(x_nodes)
    trap[0] = trap[-1] = 0.5
    tw_w = trap
    for _ in range(d - 1):
        tw_w = np.outer(tw_w, trap).ravel()
    wts = wts * tw_w
    wts = wts / wts.sum()

    phi0 = integrate_mu(
        model, lambda p: np.einsum("ni,ni->n", fld.grad_frame(p),
                                   fld.grad_frame(p)))

    def alpha_field(pts):
        df = fld.grad_frame(pts)
        bst = ev.check_invertible(pts, params)
        return np.linalg.solve(bst, df[..., None])[..., 0]

    eng = PathEngine(model, twist=twist, params=params)
    out = []
    for t in t_grid:
        if t == 0:
            out.append(InequalityReport.build(
                "phi-decay[t=0]", phi0, phi0, _quad_tol(phi0), "quadrature",
                rho=rho_value))
            continue
        phi_hat = 0.0
        var_hat = 0.0
        bias_hat = 0.0
        for i, x0 in enumerate(nodes):
            if wts[i] < 1e-14:
                continue
            run = eng.run([x0], t, h, n, seed, transport_start=0)
            W = run["WB"]
            alive = run["alive"][0]
            a = alpha_field(run["terminal"][0])
            y = np.einsum("nij,ni->nj", np.swapaxes(W, 1, 2), a)
            bst0 = ev.check_invertible(x0[None, :], params)[0]
            yb = np.where(alive[:, None], y @ bst0.T, 0.0)
            u = yb.mean(axis=0)
            var_u = yb.var(axis=0, ddof=1) / n
            phi_hat += wts[i] * float(u @ u)
            bias_hat += wts[i] * float(var_u.sum())
            var_hat += wts[i] ** 2 * float(((2 * u) ** 2 * var_u).sum())
        se = np.sqrt(var_hat)
        rhs = float(np.exp(-2 * rho_value * t) * phi0)
        tol = 3 * se + bias_allowance * rhs
        out.append(InequalityReport.build(
            f"phi-decay[t={t:g}]", phi_hat, rhs, tol, "monte-carlo",
            rho=rho_value, stderr=se, nested_bias=bias_hat, n_paths=n))
    return out


def check_matrix_lemma(dim=8, n_trials=1000, seed=0) -> InequalityReport:
    """Operator monotonicity of the inverse: D^{-1} - (C+D)^{-1} is PSD
    for random PSD C and PD D (Wishart-style A^T A samples)."""
    rng = np.random.default_rng(np.random.Philox(key=[int(seed), 0]))
    worst = np.inf
    for _ in range(n_trials):
        d = int(rng.integers(1, dim + 1))
        a1 = rng.standard_normal((2 * d, d))
        a2 = rng.standard_normal((2 * d, d))
        C = a1.T @ a1
        D = a2.T @ a2
        Di = np.linalg.inv(D)
        Si = np.linalg.inv(C + D)
        G = 0.5 * (Di + Di.T) - 0.5 * (Si + Si.T)
        worst = min(worst, float(np.linalg.eigvalsh(G)[0]))
    return InequalityReport.build(
        "matrix-lemma", -worst, 0.0, 1e-10, "matrix",
        n_trials=n_trials, dim=dim, worst_min_eigenvalue=worst)


def check_gronwall(model: ModelSpec, t, h, n, seed, x0=None) -> InequalityReport:
    """Pathwise transport-contraction envelope at the curvature rate."""
    rho = rho_inf(model)
    if x0 is None:
        x0 = model.region.center()
    eng = PathEngine(model)
    run = eng.run([np.atleast_1d(x0)], t, h, n, seed, transport_start=0,
                  gronwall_rho=rho)
    lhs = float(np.max(run["gronwall"]))
    rhs = 1.0 + 10.0 * h * t
    return InequalityReport.build(
        "gronwall", lhs, rhs, 0.0, "monte-carlo", rho=rho, n_paths=n,
        exit_fraction=run["exit_fraction"][0])


DEFAULT_TEST_FUNCTIONS_1D = (
    "sin(x)", "cos(x)", "tanh(x)", "x*exp(-x**2/2)", "sin(2*x)",
    "cos(3*x)", "tanh(2*x)", "sin(x)*cos(x)", "exp(-x**2/2)", "sin(x+1)",
)

DEFAULT_TEST_FUNCTIONS_2D = (
    "sin(x)", "cos(y)", "sin(x)*cos(y)", "tanh(x)", "tanh(x)*tanh(y)",
    "sin(x+y)", "cos(2*x)", "sin(x)*sin(y)", "tanh(x+y)", "sin(2*y)",
)


def default_test_functions(dim):
    return DEFAULT_TEST_FUNCTIONS_1D if dim == 1 else DEFAULT_TEST_FUNCTIONS_2D
