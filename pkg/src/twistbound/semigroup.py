"""Monte-Carlo semigroup estimators with common random numbers.

The function semigroup is estimated by the terminal mean of f along
simulated paths; the 1-form semigroups pair a covector field at the
terminal point with the (possibly twisted) deformed transport applied to
a fixed tangent vector.  Killed paths contribute zero, matching the
explosion indicator in the stochastic representations, and the kill
fraction is always reported.

The intertwining residual drives both sides of the identity
"(twisted) differential of P_t f equals Q_t of the (twisted)
differential" with the same Philox streams: the finite-difference
quotient of P_t and the Q_t pairing are computed per path and subtracted
before averaging, so the reported spread measures the identity itself
rather than two independent Monte-Carlo noises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import ConfigError, DegenerateEstimateError, ModeError
from .model import ModelSpec, ScalarField, make_field, L_expr
from .pathsim import PathEngine
from .twist import TwistSpec, GateReport, hypothesis_gate, PLAIN_DEFECT_TOL, defect_sup


@dataclass
class MCEstimate:
    value: float
    stderr: float
    n_paths: int
    exit_fraction: float
    seed: int
    t: float
    h: float


class OneFormField:
    """A covector field with vectorized frame components."""

    def __init__(self, manifold, frame_fn, text=""):
        self.manifold = manifold
        self._frame_fn = frame_fn
        self.text = text

    @classmethod
    def differential(cls, f, manifold):
        fld = make_field(f, manifold)
        return cls(manifold, lambda pts: fld.grad_frame(pts), text=f"d({fld.text})")

    @classmethod
    def from_components(cls, exprs, manifold):
        """Coordinate components a_i (expressions); converted to the frame."""
        fields = [ScalarField(e, manifold) for e in exprs]

        def fn(pts):
            a = np.stack([f.value(pts) for f in fields], axis=-1)
            E = manifold.frame(pts)
            return np.einsum("nji,nj->ni", E, a)

        return cls(manifold, fn, text=f"[{', '.join(f.text for f in fields)}]")

    def frame_components(self, points):
        return self._frame_fn(np.atleast_2d(np.asarray(points, dtype=float)))


def _finish(values, alive, seed, t, h):
    n = len(values)
    if not alive.any():
        raise DegenerateEstimateError("all paths exited the chart domain")
    vals = np.where(alive, values, 0.0)
    value = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else np.inf
    return MCEstimate(value=value, stderr=stderr, n_paths=n,
                      exit_fraction=float(1.0 - alive.mean()), seed=int(seed),
                      t=float(t), h=float(h))


def estimate_P(model: ModelSpec, f, x, t, h, n, seed) -> MCEstimate:
    """Terminal mean of f over n paths started at x (killed paths count 0)."""
    if n < 2:
        raise ConfigError("need at least 2 paths")
    fld = make_field(f, model.manifold)
    eng = PathEngine(model)
    out = eng.run([np.atleast_1d(x)], t, h, n, seed)
    vals = fld.value(out["terminal"][0])
    return _finish(vals, out["alive"][0], seed, t, h)


def estimate_Q(model: ModelSpec, alpha: OneFormField, x, v, t, h, n, seed,
               twist: TwistSpec | None = None, params=None) -> MCEstimate:
    """Mean pairing of alpha at the terminal point with the (twisted)
    deformed transport applied to the tangent vector v (frame components)."""
    if n < 2:
        raise ConfigError("need at least 2 paths")
    eng = PathEngine(model, twist=twist, params=params)
    out = eng.run([np.atleast_1d(x)], t, h, n, seed, transport_start=0)
    W = out["WB"] if twist is not None else out["W"]
    a = alpha.frame_components(out["terminal"][0])
    v = np.asarray(v, dtype=float)
    vals = np.einsum("ni,nij,j->n", a, W, v)
    return _finish(vals, out["alive"][0], seed, t, h)


@dataclass
class IntertwiningResult:
    residual: np.ndarray
    stderr: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    exit_fraction: float
    gate: GateReport
    n_paths: int
    delta: float

    @property
    def max_abs_residual(self):
        return float(np.max(np.abs(self.residual)))

    def tolerance(self, floor=1e-2):
        return float(max(3.0 * np.max(self.stderr), floor))

    def passed(self, floor=1e-2):
        return bool(np.all(np.abs(self.residual)
                           <= np.maximum(3.0 * self.stderr, floor)))


def intertwining_residual(model: ModelSpec, twist: TwistSpec | None, f, x,
                          t, h, n, seed, delta=1e-2, params=None,
                          epsilon=0.1) -> IntertwiningResult:
    """Componentwise residual of the twisted intertwining identity at x.

    The left side is the central finite-difference of the P-estimator in
    each chart coordinate (step delta) mapped to twisted frame
    components; the right side is the Q-estimator of the twisted
    differential of f.  All path sets share Brownian streams.
    """
    if twist is None:
        twist = TwistSpec.identity()
    dn, _ = defect_sup(model, twist, params)
    mode = "plain" if dn <= PLAIN_DEFECT_TOL else "tilde"
    gate = hypothesis_gate(model, twist, mode, params=params, epsilon=epsilon)
    if not gate.ok:
        raise ModeError(f"intertwining hypothesis gate failed: {gate.detail}")

    man = model.manifold
    d = man.dimension
    x = np.atleast_1d(np.asarray(x, dtype=float))
    fld = make_field(f, man)

    starts = [x]
    for j in range(d):
        for sgn in (+1.0, -1.0):
            xs = x.copy()
            xs[j] += sgn * delta
            starts.append(xs)
    eng = PathEngine(model, twist=twist, params=params)
    out = eng.run(starts, t, h, n, seed, transport_start=0)

    # per-path coordinate difference quotients of f at terminal time
    q = np.empty((n, d))
    for j in range(d):
        fp = np.where(out["alive"][1 + 2 * j],
                      fld.value(out["terminal"][1 + 2 * j]), 0.0)
        fm = np.where(out["alive"][2 + 2 * j],
                      fld.value(out["terminal"][2 + 2 * j]), 0.0)
        q[:, j] = (fp - fm) / (2.0 * delta)

    ev = twist.evaluator(model)
    E0 = man.frame(x[None, :])[0]
    bstar0 = ev.check_invertible(x[None, :], params)[0]
    K = np.linalg.solve(bstar0, E0.T)      # coordinate partials -> twisted frame
    lhs = q @ K.T

    # right side: alpha = (B^{-1})* df evaluated along the center paths
    term = out["terminal"][0]
    alive = out["alive"][0]
    W = out["WB"]
    df_frame = fld.grad_frame(term)
    bstar_t = ev.check_invertible(term, params)
    alpha = np.linalg.solve(bstar_t, df_frame[..., None])[..., 0]
    rhs = np.where(alive[:, None], np.einsum("ni,nia->na", alpha, W), 0.0)

    res = lhs - rhs
    return IntertwiningResult(
        residual=res.mean(axis=0),
        stderr=res.std(axis=0, ddof=1) / np.sqrt(n),
        lhs=lhs.mean(axis=0),
        rhs=rhs.mean(axis=0),
        exit_fraction=float(1.0 - alive.mean()),
        gate=gate,
        n_paths=n,
        delta=delta,
    )


def generator_commutation_residual(model: ModelSpec, f, n_points=100, seed=0):
    """Max residual of (Lf)' against f''' - V'' f' - V' f'' with exact
    derivatives at random points of the sampling region (1D flat charts)."""
    if model.manifold.dimension != 1 or model.manifold.kind not in (
            "euclidean", "interval-with-boundary", "circle"):
        raise ConfigError("commutation check is for 1-dimensional flat charts")
    fld = make_field(f, model.manifold)
    if not isinstance(fld, ScalarField) or not isinstance(model.potential, ScalarField):
        raise ConfigError("commutation check needs expression fields")
    xsym = model.manifold.coords[0]
    lf = L_expr(model, fld)
    lhs = sp.diff(lf, xsym)
    V = model.potential.expr
    F = fld.expr
    rhs = (sp.diff(F, xsym, 3) - sp.diff(V, xsym, 2) * sp.diff(F, xsym)
           - sp.diff(V, xsym) * sp.diff(F, xsym, 2))
    fn = sp.lambdify(xsym, lhs - rhs, modules="numpy")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(model.region.lo[0], model.region.hi[0], n_points)
    vals = np.asarray(fn(pts), dtype=float)
    vals = np.broadcast_to(vals, (n_points,))
    return float(np.max(np.abs(vals)))
