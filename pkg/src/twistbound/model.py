"""Potential, invariant measure, generator, and the curvature tensor field.

A :class:`ModelSpec` couples a chart with a smooth potential V, giving the
diffusion generator L = Laplace-Beltrami - <grad V, grad .>, the invariant
measure with density e^{-V}, and the pointwise tensor Hess V + Ric whose
eigenvalue infimum is the classical curvature lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy.optimize import minimize

from .errors import ConfigError, NumericError
from .expressions import FieldFunction, parse_expression
from .geometry import ManifoldSpec, ChartPoint, as_point
from .regions import Box

SYMMETRY_TOL = 1e-8


class ScalarField:
    """A scalar field given by a grammar expression, with exact derivatives."""

    def __init__(self, expr, manifold: ManifoldSpec):
        self.manifold = manifold
        self.expr = parse_expression(expr, manifold.coords)
        self.text = str(expr)
        c = manifold.coords
        self._val = FieldFunction(c, self.expr)
        self._grad = FieldFunction(c, [sp.diff(self.expr, s) for s in c])
        self._hess = FieldFunction(
            c, [[sp.diff(self.expr, a, b) for b in c] for a in c]
        )

    def value(self, points):
        return self._val(points)

    def grad_coords(self, points):
        return self._grad(points)

    def hess_coords(self, points):
        return self._hess(points)

    def grad_frame(self, points):
        """Frame components of the differential (equivalently the gradient)."""
        E = self.manifold.frame(points)
        return np.einsum("nji,nj->ni", E, self.grad_coords(points))

    def __repr__(self):
        return f"ScalarField({self.text!r})"


class CallableField:
    """Scalar field from a plain callable; derivatives by central differences."""

    def __init__(self, fn, manifold: ManifoldSpec, step=1e-5):
        self.manifold = manifold
        self.fn = fn
        self.step = step
        self.text = getattr(fn, "__name__", "callable")

    def value(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.fn(pts), dtype=float).reshape(pts.shape[0])

    def grad_coords(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts.shape[1]
        out = np.empty_like(pts)
        for j in range(d):
            h = self.step * (1.0 + np.abs(pts[:, j]))
            pp, pm = pts.copy(), pts.copy()
            pp[:, j] += h
            pm[:, j] -= h
            out[:, j] = (self.value(pp) - self.value(pm)) / (2.0 * h)
        return out

    def hess_coords(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, d = pts.shape
        out = np.empty((n, d, d))
        f0 = self.value(pts)
        for a in range(d):
            ha = 10 * self.step * (1.0 + np.abs(pts[:, a]))
            for b in range(a, d):
                hb = 10 * self.step * (1.0 + np.abs(pts[:, b]))
                if a == b:
                    pp, pm = pts.copy(), pts.copy()
                    pp[:, a] += ha
                    pm[:, a] -= ha
                    out[:, a, a] = (self.value(pp) - 2 * f0 + self.value(pm)) / ha ** 2
                else:
                    ppp, ppm, pmp, pmm = (pts.copy() for _ in range(4))
                    ppp[:, a] += ha
                    ppp[:, b] += hb
                    ppm[:, a] += ha
                    ppm[:, b] -= hb
                    pmp[:, a] -= ha
                    pmp[:, b] += hb
                    pmm[:, a] -= ha
                    pmm[:, b] -= hb
                    v = (self.value(ppp) - self.value(ppm) - self.value(pmp)
                         + self.value(pmm)) / (4 * ha * hb)
                    out[:, a, b] = v
                    out[:, b, a] = v
        return out

    def grad_frame(self, points):
        E = self.manifold.frame(points)
        return np.einsum("nji,nj->ni", E, self.grad_coords(points))

    def __repr__(self):
        return f"CallableField({self.text})"


def make_field(f, manifold):
    if isinstance(f, (ScalarField, CallableField)):
        return f
    if callable(f) and not isinstance(f, (str, sp.Expr)):
        return CallableField(f, manifold)
    return ScalarField(f, manifold)


@dataclass
class BakryEmeryValue:
    point: ChartPoint
    tensor: np.ndarray
    smallest_eigenvalue: float


@dataclass
class RhoResult:
    value: float
    minimizer: np.ndarray
    region: Box
    caveat: str = "grid-infimum"


class ModelSpec:
    """Chart + potential + sampling region."""

    def __init__(self, manifold: ManifoldSpec, potential, region: Box):
        if region.dim != manifold.dimension:
            raise ConfigError("sampling region dimension mismatch")
        self.manifold = manifold
        self.potential = make_field(potential, manifold)
        self.region = region

    # -- vectorized providers -------------------------------------------------

    def V(self, points):
        v = self.potential.value(points)
        if not np.all(np.isfinite(v)):
            raise NumericError("potential is not finite on requested points")
        return v

    def dV_coords(self, points):
        return self.potential.grad_coords(points)

    def grad_frame(self, points):
        return self.potential.grad_frame(points)

    def hess_frame(self, points):
        """Frame components of the covariant Hessian of V."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        H = self.potential.hess_coords(pts)
        Gam = self.manifold.christoffel(pts)
        dV = self.dV_coords(pts)
        Hcov = H - np.einsum("nkij,nk->nij", Gam, dV)
        E = self.manifold.frame(pts)
        return np.einsum("nai,nab,nbj->nij", E, Hcov, E)

    def bakry_emery(self, points):
        """(N, d, d) frame components of Hess V + Ric."""
        return self.hess_frame(points) + self.manifold.ricci_sharp_frame(points)

    def drift(self, points):
        """Full coordinate SDE drift: -g^{jk} Gamma^i_{jk} - (g^{-1} dV)^i."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lap = self.manifold.laplacian_drift(pts)
        ginv = self.manifold.metric_inv(pts)
        return lap - np.einsum("nij,nj->ni", ginv, self.dV_coords(pts))

    def mu_weights(self, points):
        """Unnormalized density e^{-(V - min V)} sqrt(det g) at the points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.V(pts)
        dens = np.exp(-(v - v.min()))
        detg = np.linalg.det(self.manifold.metric(pts))
        return dens * np.sqrt(detg)

    def __repr__(self):
        return f"ModelSpec({self.manifold.label}, V={self.potential.text!r})"


# -- spec operations -----------------------------------------------------------


def grad_hess_V(model: ModelSpec, x):
    """Gradient and covariant Hessian of V in frame components at one point."""
    p = model.manifold.check_point(x)
    pts = p.coords[None, :]
    g = model.grad_frame(pts)[0]
    H = model.hess_frame(pts)[0]
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        raise NumericError(f"potential derivatives not finite at {p.coords}")
    return g, H


def bakry_emery_at(model: ModelSpec, x) -> BakryEmeryValue:
    p = model.manifold.check_point(x)
    t = model.bakry_emery(p.coords[None, :])[0]
    asym = np.max(np.abs(t - t.T))
    if asym > SYMMETRY_TOL:
        raise NumericError(f"curvature tensor asymmetry {asym:.2e} at {p.coords}")
    t = 0.5 * (t + t.T)
    return BakryEmeryValue(
        point=p, tensor=t, smallest_eigenvalue=float(np.linalg.eigvalsh(t)[0])
    )


def apply_L(model: ModelSpec, f, x) -> float:
    """Generator applied to a scalar field at a point:
    trace_g(Hess f) - <grad V, grad f>_g."""
    field = make_field(f, model.manifold)
    p = as_point(x, model.manifold.dimension)
    pts = p.coords[None, :]
    ginv = model.manifold.metric_inv(pts)[0]
    Gam = model.manifold.christoffel(pts)[0]
    df = field.grad_coords(pts)[0]
    Hf = field.hess_coords(pts)[0] - np.einsum("kij,k->ij", Gam, df)
    dV = model.dV_coords(pts)[0]
    out = float(np.einsum("ij,ij->", ginv, Hf) - dV @ ginv @ df)
    if not np.isfinite(out):
        raise NumericError(f"generator value not finite at {p.coords}")
    return out


def L_expr(model: ModelSpec, f) -> sp.Expr:
    """Symbolic Lf for symbolic charts (exact, used by algebraic checks)."""
    if not model.manifold.is_symbolic:
        raise ConfigError("symbolic generator needs a symbolic chart")
    if not isinstance(model.potential, ScalarField):
        raise ConfigError("symbolic generator needs an expression potential")
    field = f if isinstance(f, ScalarField) else ScalarField(f, model.manifold)
    m = model.manifold
    c = m.coords
    d = m.dimension
    ginv = m.metric_sym.inv()
    Gam = m.sym_christoffel()
    df = [sp.diff(field.expr, s) for s in c]
    out = sp.S(0)
    for i in range(d):
        for j in range(d):
            hess_ij = sp.diff(field.expr, c[i], c[j]) - sum(
                Gam[k][i][j] * df[k] for k in range(d)
            )
            out += ginv[i, j] * hess_ij
            out -= ginv[i, j] * sp.diff(model.potential.expr, c[i]) * df[j]
    return sp.simplify(out)


def rho_inf(model: ModelSpec, detail=False):
    """Infimum over the sampling grid of the smallest eigenvalue of
    Hess V + Ric, refined by local minimization from the best grid point.

    A sampled infimum can only over-estimate the true infimum over the
    manifold, hence the ``grid-infimum`` caveat carried by the detail
    result.
    """
    grid = model.region.grid()
    if grid.size == 0:
        raise ConfigError("empty sampling region")
    tensors = model.bakry_emery(grid)
    tensors = 0.5 * (tensors + np.swapaxes(tensors, -1, -2))
    eigs = np.linalg.eigvalsh(tensors)[:, 0]
    k = int(np.argmin(eigs))
    best_val, best_x = float(eigs[k]), grid[k]

    def objective(z):
        zc = model.region.clip(z)
        t = model.bakry_emery(zc[None, :])[0]
        return float(np.linalg.eigvalsh(0.5 * (t + t.T))[0])

    res = minimize(objective, best_x, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400})
    if res.fun < best_val:
        best_val, best_x = float(res.fun), model.region.clip(res.x)
    if detail:
        return RhoResult(value=best_val, minimizer=np.asarray(best_x), region=model.region)
    return best_val
