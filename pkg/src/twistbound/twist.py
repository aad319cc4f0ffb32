"""Pointwise twist calculus.

A twist is an invertible field B of tangent-space maps, stored here in
orthonormal-frame components, so the metric adjoint is a plain transpose.
From B the module assembles, exactly for expression-backed twists on
symbolic charts and by finite differences otherwise:

* the dual field B and its covariant derivative, one matrix per frame
  direction;
* the antisymmetry defect (per direction, the difference between
  (nabla B)(B)^{-1} applied to forms and its transpose) and the positive
  penalty built from it;
* the conjugated curvature tensor, the tensor Laplacian of the dual
  field, the twisted drift potential, and the similar field
  S = B . potential . B^{-1} whose eigenvalue infima are the certified
  bound values (plain mode) and, after symmetrization minus the penalty,
  the relaxed bound values (tilde mode).

Plain mode is only valid when the defect vanishes; the gate is enforced
here and surfaced as a :class:`ModeError`, never silently bypassed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.optimize import minimize

from .errors import ConfigError, ModeError, NumericError, TwistSingularError
from .expressions import FieldFunction, parse_expression
from .geometry import ChartPoint, as_point
from .model import ModelSpec, ScalarField
from .regions import Box

PLAIN_DEFECT_TOL = 1e-8
PLAIN_ASYMMETRY_TOL = 1e-6
DEFAULT_COND_LIMIT = 1e8

_FAMILIES = ("identity", "scalar", "constant-matrix", "diagonal", "shear",
             "matrix", "callable")


@dataclass
class TwistSpec:
    """A parameterized family of invertible tangent-space twists."""

    family: str
    entries: tuple = ()
    param_names: tuple = ()
    params: tuple = ()
    cond_limit: float = DEFAULT_COND_LIMIT
    callable_bstar: object = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown twist family {self.family!r}")
        self.param_names = tuple(self.param_names)
        self.params = tuple(float(p) for p in self.params)
        self._evaluators = {}

    # -- constructors ---------------------------------------------------------

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def scalar(cls, expression, param_names=(), params=()):
        return cls("scalar", entries=(str(expression),), param_names=param_names,
                   params=params)

    @classmethod
    def scalar_exp_poly(cls, degree, coord="x"):
        """Scalar family lambda = exp(c1 x + ... + c_degree x^degree)."""
        if degree < 1:
            raise ConfigError("exp-poly family needs degree >= 1")
        names = tuple(f"c{k}" for k in range(1, degree + 1))
        poly = " + ".join(f"c{k}*{coord}**{k}" for k in range(1, degree + 1))
        return cls("scalar", entries=(f"exp({poly})",), param_names=names,
                   params=(0.0,) * degree)

    @classmethod
    def constant(cls, matrix):
        q = np.asarray(matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ConfigError("constant twist needs a square matrix")
        entries = tuple(tuple(repr(float(v)) for v in row) for row in q)
        return cls("constant-matrix", entries=entries)

    @classmethod
    def diagonal(cls, expressions, param_names=(), params=()):
        return cls("diagonal", entries=tuple(str(e) for e in expressions),
                   param_names=param_names, params=params)

    @classmethod
    def shear(cls, expression, param_names=(), params=()):
        return cls("shear", entries=(str(expression),), param_names=param_names,
                   params=params)

    @classmethod
    def matrix(cls, rows, param_names=(), params=()):
        entries = tuple(tuple(str(e) for e in row) for row in rows)
        if any(len(row) != len(entries) for row in entries):
            raise ConfigError("matrix twist needs a square expression array")
        return cls("matrix", entries=entries, param_names=param_names, params=params)

    @classmethod
    def from_callable(cls, bstar_fn):
        """Numeric twist: ``bstar_fn(points) -> (N, d, d)`` frame components
        of the dual field.  Derivatives are taken by finite differences."""
        return cls("callable", callable_bstar=bstar_fn)

    # -- symbolic dual field ----------------------------------------------------

    def bstar_sym(self, manifold, param_syms):
        """B* in frame components as a sympy matrix over chart coordinates."""
        c = manifold.coords
        d = manifold.dimension
        if self.family == "identity":
            return sp.eye(d)
        if self.family == "scalar":
            lam = parse_expression(self.entries[0], c, param_syms)
            return lam * sp.eye(d)
        if self.family == "constant-matrix":
            q = sp.Matrix([[sp.Float(e) for e in row] for row in self.entries])
            if q.shape != (d, d):
                raise ConfigError(f"constant twist is {q.shape}, chart is {d}-dimensional")
            return q.T  # entries give B; dual is the transpose
        if self.family == "diagonal":
            if len(self.entries) != d:
                raise ConfigError("diagonal twist needs one expression per dimension")
            return sp.diag(*[parse_expression(e, c, param_syms) for e in self.entries])
        if self.family == "shear":
            if d != 2:
                raise ConfigError("shear twist is 2-dimensional")
            s = parse_expression(self.entries[0], c, param_syms)
            return sp.Matrix([[1, s], [0, 1]])
        if self.family == "matrix":
            rows = [[parse_expression(e, c, param_syms) for e in row]
                    for row in self.entries]
            m = sp.Matrix(rows)
            if m.shape != (d, d):
                raise ConfigError(f"matrix twist is {m.shape}, chart is {d}-dimensional")
            return m
        raise ConfigError("callable twists have no symbolic dual field")

    @property
    def n_params(self):
        return len(self.param_names)

    def label(self):
        if self.family in ("scalar", "shear"):
            return f"{self.family}({self.entries[0]})"
        return self.family

    def evaluator(self, model):
        key = id(model)
        ev = self._evaluators.get(key)
        if ev is None or ev.model is not model:
            ev = TwistFieldEvaluator(model, self)
            self._evaluators[key] = ev
        return ev


@dataclass
class TwistEval:
    """All pointwise twist tensors in orthonormal-frame components."""

    point: ChartPoint
    b: np.ndarray
    bstar: np.ndarray
    nabla_bstar: np.ndarray      # (d, d, d): direction-indexed covariant derivative
    defect: np.ndarray           # (d, d, d): antisymmetric matrix per direction
    penalty: np.ndarray          # (d, d) symmetric PSD
    conjugated: np.ndarray       # (B^{-1})* M B*
    tensor_lap: np.ndarray       # frame components of the tensor Laplacian of B*
    potential: np.ndarray        # conjugated - (B^{-1})* tensor_lap
    similar: np.ndarray          # B* potential (B*)^{-1}

    def inner_vectors(self, u, v):
        """Twisted inner product on tangent vectors: <B^{-1}u, B^{-1}v>."""
        binv = np.linalg.inv(self.b)
        return float((binv @ np.asarray(u)) @ (binv @ np.asarray(v)))

    def inner_forms(self, alpha, beta):
        """Twisted inner product on 1-forms: <B* alpha, B* beta>."""
        return float((self.bstar @ np.asarray(alpha)) @ (self.bstar @ np.asarray(beta)))


@dataclass
class BoundReport:
    mode: str
    rho_b: float | None
    rho_tilde_b: float
    defect_norm: float
    asymmetry_residual: float
    region: Box
    minimizer_rho_b: np.ndarray | None
    minimizer_rho_tilde_b: np.ndarray
    caveat: str = "grid-infimum"

    @property
    def value(self):
        return self.rho_b if self.mode == "plain" else self.rho_tilde_b


@dataclass
class SymmetryReport:
    holds: bool
    residual: float
    witness: ChartPoint | None = None


@dataclass
class GateReport:
    mode: str
    ok: bool
    defect_norm: float
    epsilon: float | None = None
    lower_bound: float | None = None
    detail: str = ""


class TwistFieldEvaluator:
    """Vectorized evaluator of all twist tensors for one (model, twist) pair.

    Expression twists on symbolic charts are assembled exactly through
    sympy once and lambdified; callable twists (and the brute-force
    cross-check route) go through :func:`assemble_fd`.
    """

    def __init__(self, model: ModelSpec, twist: TwistSpec):
        self.model = model
        self.twist = twist
        self.symbolic = (
            model.manifold.is_symbolic
            and isinstance(model.potential, ScalarField)
            and twist.family != "callable"
        )
        self.param_syms = tuple(
            sp.Symbol(n, real=True) for n in twist.param_names
        )
        if self.symbolic:
            self._build_symbolic()
        else:
            if twist.family == "callable":
                self._bstar_fn = twist.callable_bstar
            else:
                # expression twist on a numeric chart: evaluate B* through
                # sympy but differentiate the composite by finite differences
                mat = twist.bstar_sym(model.manifold, self.param_syms)
                fn = FieldFunction(model.manifold.coords + self.param_syms, mat)
                self._bstar_fn = fn

    # -- symbolic assembly ------------------------------------------------------

    def _build_symbolic(self):
        m = self.model.manifold
        c = m.coords
        d = m.dimension
        args = c + self.param_syms
        g = m.sym_metric()
        ginv = g.inv()
        E = m.sym_frame()
        Einv = E.inv()
        Gam = m.sym_christoffel()
        GamM = [sp.Matrix([[Gam[i][mm][k] for k in range(d)] for i in range(d)])
                for mm in range(d)]

        bstar = self.twist.bstar_sym(m, self.param_syms)
        bmat = bstar.T
        bc = E * bmat * Einv  # coordinate components of B

        nabla = [sp.diff(bc, c[mm]) + GamM[mm] * bc - bc * GamM[mm] for mm in range(d)]
        nabla_f = []
        for j in range(d):
            acc = sp.zeros(d, d)
            for mm in range(d):
                acc += E[mm, j] * nabla[mm]
            nabla_f.append(Einv * acc * E)
        nabla_bstar = [nf.T for nf in nabla_f]

        bstar_inv = bstar.inv()
        A = [nabla_bstar[j] * bstar_inv for j in range(d)]
        defect = [A[j].T - A[j] for j in range(d)]
        penalty = sp.zeros(d, d)
        for j in range(d):
            penalty += defect[j].T * defect[j]
        penalty = penalty / 4

        # second covariant derivative and tensor Laplacian of B
        def nabla2(l, mm):
            t = sp.diff(nabla[mm], c[l]) + GamM[l] * nabla[mm] - nabla[mm] * GamM[l]
            for p in range(d):
                t -= Gam[p][l][mm] * nabla[p]
            return t

        gradV = ginv * sp.Matrix([sp.diff(self.model.potential.expr, s) for s in c])
        tlap_c = sp.zeros(d, d)
        for l in range(d):
            for mm in range(d):
                if ginv[l, mm] != 0:
                    tlap_c += ginv[l, mm] * nabla2(l, mm)
        for mm in range(d):
            tlap_c -= gradV[mm] * nabla[mm]
        tensor_lap = (Einv * tlap_c * E).T

        # curvature tensor in frame components
        hess = sp.Matrix([[sp.diff(self.model.potential.expr, a, b) for b in c]
                          for a in c])
        for i in range(d):
            for j in range(d):
                hess[i, j] -= sum(Gam[k][i][j] * sp.diff(self.model.potential.expr, c[k])
                                  for k in range(d))
        curv = E.T * hess * E + E.T * m.sym_ricci() * E

        similar = curv - tensor_lap * bstar_inv
        potential = bstar_inv * similar * bstar
        conjugated = bstar_inv * curv * bstar

        self._f_bstar = FieldFunction(args, bstar)
        self._f_nabla_bstar = FieldFunction(args, [list(nb) for nb in nabla_bstar])
        self._f_defect = FieldFunction(args, [list(df) for df in defect])
        self._f_penalty = FieldFunction(args, penalty)
        self._f_tensor_lap = FieldFunction(args, tensor_lap)
        self._f_similar = FieldFunction(args, similar)
        self._f_potential = FieldFunction(args, potential)
        self._f_conjugated = FieldFunction(args, conjugated)

    # -- evaluation ---------------------------------------------------------------

    def _resolve_params(self, params):
        if params is None:
            return self.twist.params
        params = tuple(float(p) for p in params)
        if len(params) != self.twist.n_params:
            raise ConfigError(
                f"twist expects {self.twist.n_params} parameters, got {len(params)}"
            )
        return params

    def bstar(self, points, params=None):
        params = self._resolve_params(params)
        if self.symbolic:
            return self._f_bstar(points, *params)
        if self.twist.family == "callable":
            return np.asarray(self._bstar_fn(np.atleast_2d(points)), dtype=float)
        return self._bstar_fn(points, *params)

    def check_invertible(self, points, params=None, where=None):
        bs = self.bstar(points, params)
        sv = np.linalg.svd(bs, compute_uv=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = sv[..., 0] / sv[..., -1]
        bad = ~np.isfinite(cond) | (cond > self.twist.cond_limit)
        if np.any(bad):
            k = int(np.argmax(bad))
            c = float(cond[k]) if np.isfinite(cond[k]) else np.inf
            pt = np.atleast_2d(points)[k]
            raise TwistSingularError(c, where=where or pt)
        return bs

    def tensors(self, points, params=None):
        """Evaluate the full tensor set on (N, d) points.

        Returns a dict of arrays: bstar (N,d,d), nabla_bstar (N,d,d,d),
        defect (N,d,d,d), penalty (N,d,d), tensor_lap (N,d,d),
        similar (N,d,d), potential (N,d,d), conjugated (N,d,d).
        """
        params = self._resolve_params(params)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self.check_invertible(pts, params)
        if self.symbolic:
            d = self.model.manifold.dimension
            n = pts.shape[0]
            nb = self._f_nabla_bstar(pts, *params).reshape(n, d, d, d)
            df = self._f_defect(pts, *params).reshape(n, d, d, d)
            return {
                "bstar": self._f_bstar(pts, *params),
                "nabla_bstar": nb,
                "defect": df,
                "penalty": self._f_penalty(pts, *params),
                "tensor_lap": self._f_tensor_lap(pts, *params),
                "similar": self._f_similar(pts, *params),
                "potential": self._f_potential(pts, *params),
                "conjugated": self._f_conjugated(pts, *params),
            }
        return assemble_fd(self.model, lambda q: self.bstar(q, params), pts)


# -- finite-difference assembly --------------------------------------------------


def _fd_matrix_derivs(fn, pts, step1=1e-5, step2=1e-4):
    """First and second partials of a matrix field by central differences.

    Second derivatives use Richardson extrapolation of the central
    second-difference stencils (two step sizes, fourth-order combination).
    Returns (d1[n,l,:,:], d2[n,l,m,:,:]).
    """
    pts = np.atleast_2d(pts)
    n, d = pts.shape
    f0 = fn(pts)
    r = f0.shape[-1]
    d1 = np.empty((n, d, r, r))
    d2 = np.empty((n, d, d, r, r))

    def shift(l, h):
        q = pts.copy()
        q[:, l] += h
        return q

    for l in range(d):
        h = step1 * (1.0 + np.abs(pts[:, l]))
        hm = h[:, None, None]
        d1[:, l] = (fn(shift(l, h)) - fn(shift(l, -h))) / (2.0 * hm)

    def second_same(l, h):
        hm = h[:, None, None]
        return (fn(shift(l, h)) - 2.0 * f0 + fn(shift(l, -h))) / hm ** 2

    def second_mixed(l, m, hl, hm_):
        q1 = shift(l, hl); q1[:, m] += hm_
        q2 = shift(l, hl); q2[:, m] -= hm_
        q3 = shift(l, -hl); q3[:, m] += hm_
        q4 = shift(l, -hl); q4[:, m] -= hm_
        den = (4.0 * hl * hm_)[:, None, None]
        return (fn(q1) - fn(q2) - fn(q3) + fn(q4)) / den

    for l in range(d):
        hl = step2 * (1.0 + np.abs(pts[:, l]))
        coarse = second_same(l, 2.0 * hl)
        fine = second_same(l, hl)
        d2[:, l, l] = (4.0 * fine - coarse) / 3.0
        for m in range(l + 1, d):
            hm_ = step2 * (1.0 + np.abs(pts[:, m]))
            coarse = second_mixed(l, m, 2.0 * hl, 2.0 * hm_)
            fine = second_mixed(l, m, hl, hm_)
            val = (4.0 * fine - coarse) / 3.0
            d2[:, l, m] = val
            d2[:, m, l] = val
    return d1, d2


def assemble_fd(model: ModelSpec, bstar_fn, points):
    """Brute-force assembly of all twist tensors from finite differences.

    This path backs callable twists in production and doubles as the
    independent oracle against the symbolic route in tests.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    man = model.manifold
    d = man.dimension

    E = man.frame(pts)
    Einv = np.linalg.inv(E)
    Gam = man.christoffel(pts)        # (n, i, j, k)
    dGam = man.dchristoffel(pts)      # (n, l, i, j, k)
    ginv = man.metric_inv(pts)
    dV = model.dV_coords(pts)

    def bc_fn(q):
        Eq = man.frame(q)
        bs = np.asarray(bstar_fn(q), dtype=float)
        return Eq @ np.swapaxes(bs, -1, -2) @ np.linalg.inv(Eq)

    bc = bc_fn(pts)
    dbc, d2bc = _fd_matrix_derivs(bc_fn, pts)

    # GamM[n, m, i, k] = Gamma^i_{mk}
    GamM = np.swapaxes(Gam, 1, 2)
    dGamM = np.swapaxes(dGam, 2, 3)  # (n, l, m, i, k)

    nabla = dbc + GamM @ bc[:, None] - bc[:, None] @ GamM   # (n, m, d, d)

    # frame-direction covariant derivative of B and of B*
    nab_dir = np.einsum("nmj,nmik->njik", E, nabla)          # (n, j, d, d)
    nabla_b_frame = Einv[:, None] @ nab_dir @ E[:, None]
    nabla_bstar = np.swapaxes(nabla_b_frame, -1, -2)

    bstar = np.asarray(bstar_fn(pts), dtype=float)
    bstar_inv = np.linalg.inv(bstar)
    A = nabla_bstar @ bstar_inv[:, None]
    defect = np.swapaxes(A, -1, -2) - A
    penalty = 0.25 * np.einsum("njab,njac->nbc", defect, defect)

    # second covariant derivative:
    # d_l(nabla_m B) + [Gamma_l, nabla_m B] - Gamma^p_{lm} nabla_p B
    # with d_l(nabla_m B) = d2 B + [d_l Gamma_m, B] + [Gamma_m, d_l B]
    d_nabla = (
        d2bc
        + dGamM @ bc[:, None, None]
        - bc[:, None, None] @ dGamM
        + GamM[:, None, :] @ dbc[:, :, None]
        - dbc[:, :, None] @ GamM[:, None, :]
    )  # (n, l, m, d, d)
    nabla2 = (
        d_nabla
        + GamM[:, :, None] @ nabla[:, None, :]
        - nabla[:, None, :] @ GamM[:, :, None]
        - np.einsum("nplm,npik->nlmik", Gam, nabla)
    )
    tlap_c = np.einsum("nlm,nlmik->nik", ginv, nabla2)
    gradV = np.einsum("nij,nj->ni", ginv, dV)
    tlap_c -= np.einsum("nm,nmik->nik", gradV, nabla)
    tensor_lap = np.swapaxes(Einv @ tlap_c @ E, -1, -2)

    curv = model.bakry_emery(pts)
    similar = curv - tensor_lap @ bstar_inv
    potential = bstar_inv @ similar @ bstar
    conjugated = bstar_inv @ curv @ bstar

    return {
        "bstar": bstar,
        "nabla_bstar": nabla_bstar,
        "defect": defect,
        "penalty": penalty,
        "tensor_lap": tensor_lap,
        "similar": similar,
        "potential": potential,
        "conjugated": conjugated,
    }


# -- spec operations ---------------------------------------------------------------


def _eval_to_twist_eval(point, t):
    return TwistEval(
        point=point,
        b=np.swapaxes(t["bstar"], -1, -2)[0],
        bstar=t["bstar"][0],
        nabla_bstar=t["nabla_bstar"][0],
        defect=t["defect"][0],
        penalty=t["penalty"][0],
        conjugated=t["conjugated"][0],
        tensor_lap=t["tensor_lap"][0],
        potential=t["potential"][0],
        similar=t["similar"][0],
    )


def twist_eval(model: ModelSpec, twist: TwistSpec, x, params=None) -> TwistEval:
    p = model.manifold.check_point(x)
    ev = twist.evaluator(model)
    t = ev.tensors(p.coords[None, :], params)
    return _eval_to_twist_eval(p, t)


def twist_eval_fd(model: ModelSpec, twist: TwistSpec, x, params=None) -> TwistEval:
    """Finite-difference (brute-force) assembly, the cross-check route."""
    p = model.manifold.check_point(x)
    ev = twist.evaluator(model)
    t = assemble_fd(model, lambda q: ev.bstar(q, params), p.coords[None, :])
    return _eval_to_twist_eval(p, t)


def tensor_laplacian(model: ModelSpec, twist: TwistSpec, x, params=None) -> np.ndarray:
    return twist_eval(model, twist, x, params).tensor_lap


def defect_sup(model: ModelSpec, twist: TwistSpec, params=None, grid=None):
    """Sup over the sampling grid of the Frobenius norm of the defect,
    with the maximizing point."""
    ev = twist.evaluator(model)
    pts = model.region.grid() if grid is None else np.atleast_2d(grid)
    t = ev.tensors(pts, params)
    norms = np.sqrt(np.einsum("njab,njab->n", t["defect"], t["defect"]))
    k = int(np.argmax(norms))
    return float(norms[k]), pts[k]


def symmetry_criterion(model: ModelSpec, twist: TwistSpec, params=None) -> SymmetryReport:
    """Checks per-direction symmetry of (nabla B*)(B*)^{-1} on the grid."""
    residual, at = defect_sup(model, twist, params)
    if residual <= PLAIN_DEFECT_TOL:
        return SymmetryReport(holds=True, residual=residual)
    return SymmetryReport(holds=False, residual=residual, witness=ChartPoint(at))


def hypothesis_gate(model: ModelSpec, twist: TwistSpec, mode, params=None,
                    epsilon=0.1) -> GateReport:
    """Hypothesis gate for semigroup identities and inequalities.

    plain: the defect must vanish on the grid (sup <= 1e-8).
    tilde: the symmetrized similar field minus (1+eps) penalty must be
    bounded below on the grid (finite infimum, recorded).
    """
    dn, _ = defect_sup(model, twist, params)
    if mode == "plain":
        ok = dn <= PLAIN_DEFECT_TOL
        detail = "" if ok else (
            f"defect sup {dn:.3e} > {PLAIN_DEFECT_TOL}; use tilde mode"
        )
        return GateReport(mode="plain", ok=ok, defect_norm=dn, detail=detail)
    if mode != "tilde":
        raise ConfigError(f"unknown mode {mode!r}")
    ev = twist.evaluator(model)
    t = ev.tensors(model.region.grid(), params)
    s = t["similar"]
    fieldv = 0.5 * (s + np.swapaxes(s, -1, -2)) - (1.0 + epsilon) * t["penalty"]
    eigs = np.linalg.eigvalsh(fieldv)[:, 0]
    lb = float(np.min(eigs))
    ok = np.isfinite(lb)
    detail = "" if ok else "lower bound is not finite on the grid"
    return GateReport(mode="tilde", ok=ok, defect_norm=dn, epsilon=epsilon,
                      lower_bound=lb, detail=detail)


def bound_scan(model: ModelSpec, twist: TwistSpec, mode, params=None,
               refine=True) -> BoundReport:
    """Grid-plus-refinement infimum of the certified bound field.

    plain mode: smallest eigenvalue of the (symmetrized) similar field;
    refuses when the defect does not vanish.  tilde mode: smallest
    eigenvalue of the symmetrized similar field minus the penalty.
    """
    if mode not in ("plain", "tilde"):
        raise ConfigError(f"unknown mode {mode!r}")
    ev = twist.evaluator(model)
    grid = model.region.grid()
    if grid.size == 0:
        raise ConfigError("empty sampling region")
    t = ev.tensors(grid, params)
    defect_norm = float(np.max(np.sqrt(
        np.einsum("njab,njab->n", t["defect"], t["defect"]))))

    s = t["similar"]
    asym = float(np.max(np.sqrt(np.einsum(
        "nab,nab->n", s - np.swapaxes(s, -1, -2), s - np.swapaxes(s, -1, -2)))))
    s_sym = 0.5 * (s + np.swapaxes(s, -1, -2))

    if mode == "plain":
        if defect_norm > PLAIN_DEFECT_TOL:
            raise ModeError(
                f"plain mode requires a vanishing defect; sup norm is "
                f"{defect_norm:.3e} > {PLAIN_DEFECT_TOL:g}. Use mode='tilde'."
            )
        if asym > PLAIN_ASYMMETRY_TOL:
            raise NumericError(
                f"similar field asymmetry residual {asym:.3e} exceeds "
                f"{PLAIN_ASYMMETRY_TOL:g} despite a vanishing defect"
            )

    def field_of(tt, tilde):
        ss = tt["similar"]
        ss = 0.5 * (ss + np.swapaxes(ss, -1, -2))
        return ss - tt["penalty"] if tilde else ss

    def scan(tilde):
        eigs = np.linalg.eigvalsh(field_of(t, tilde))[:, 0]
        k = int(np.argmin(eigs))
        val, at = float(eigs[k]), grid[k]
        if refine:
            def objective(z):
                zc = model.region.clip(z)
                tt = ev.tensors(zc[None, :], params)
                return float(np.linalg.eigvalsh(field_of(tt, tilde))[0, 0])
            res = minimize(objective, at, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 400})
            if res.fun < val:
                val, at = float(res.fun), model.region.clip(res.x)
        return val, np.asarray(at)

    rho_tilde, at_tilde = scan(tilde=True)
    if mode == "plain":
        rho_b, at_b = scan(tilde=False)
    else:
        rho_b, at_b = None, None
    return BoundReport(
        mode=mode, rho_b=rho_b, rho_tilde_b=rho_tilde, defect_norm=defect_norm,
        asymmetry_residual=asym, region=model.region, minimizer_rho_b=at_b,
        minimizer_rho_tilde_b=at_tilde,
    )
