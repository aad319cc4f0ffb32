"""Ground-truth spectral gaps, quadrature against the invariant measure,
and twist-parameter optimization.

The weighted Dirichlet form is assembled edge-wise on 1D or tensor-2D
grids: each edge carries the weight (metric factor) e^{-V} evaluated at
its midpoint, which makes the stiffness matrix symmetric positive
semi-definite by construction with constants in its kernel (Neumann
truncation or periodic wrap).  The spectral gap is the smallest nonzero
generalized eigenvalue against the lumped mass matrix; V is always
shifted by its grid minimum, which leaves the gap unchanged and avoids
overflow of e^{-V}.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg
from scipy.optimize import minimize, minimize_scalar

from .errors import ConfigError, NumericError
from .model import ModelSpec, make_field
from .regions import Box
from .twist import TwistSpec, bound_scan, ModeError, TwistSingularError

DENSE_LIMIT = 5000
BOUNDARY_MASS_TOL = 1e-4


@dataclass
class GridSpec:
    lo: tuple
    hi: tuple
    npts: tuple
    periodic: tuple = ()

    def __post_init__(self):
        self.lo = tuple(float(v) for v in self.lo)
        self.hi = tuple(float(v) for v in self.hi)
        self.npts = tuple(int(v) for v in self.npts)
        if not self.periodic:
            self.periodic = (False,) * len(self.lo)
        if len(self.lo) > 2:
            raise ConfigError("eigensolver grids are 1D or 2D")
        if any(n < 8 for n in self.npts):
            raise ConfigError("grid too coarse (need at least 8 points per axis)")

    @property
    def dim(self):
        return len(self.lo)

    def axes(self):
        return [
            np.linspace(l, h, n, endpoint=not p)
            for l, h, n, p in zip(self.lo, self.hi, self.npts, self.periodic)
        ]

    def steps(self):
        return [
            (h - l) / (n if p else n - 1)
            for l, h, n, p in zip(self.lo, self.hi, self.npts, self.periodic)
        ]


def grid_for_model(model: ModelSpec, npts=None) -> GridSpec:
    """Default eigensolver grid: the sampling region, with boundary
    treatment inferred from the chart (periodic for circle/torus)."""
    man = model.manifold
    if man.kind == "circle":
        n = npts or (512,)
        return GridSpec((0.0,), (2 * np.pi,), n, periodic=(True,))
    if man.kind == "flat-torus":
        n = npts or (64,) * man.dimension
        return GridSpec((0.0,) * man.dimension, (2 * np.pi,) * man.dimension, n,
                        periodic=(True,) * man.dimension)
    if man.kind == "interval-with-boundary":
        n = npts or (1001,)
        return GridSpec((man.domain.lo[0],), (man.domain.hi[0],), n)
    region = model.region
    n = npts or tuple(max(v, 401) for v in region.npts)
    return GridSpec(region.lo, region.hi, n)


@dataclass
class Discretization:
    grid: GridSpec
    stiffness: sparse.csr_matrix
    mass: np.ndarray
    model: ModelSpec


@dataclass
class SpectralResult:
    lambda1: float
    eigvec: np.ndarray
    residual_norm: float
    lambda0: float


def _diag_metric_factors(model, pts, axis):
    """(g^{jj} sqrt(det g), sqrt(det g)) on points, requiring diagonal g."""
    g = model.manifold.metric(pts)
    d = g.shape[-1]
    if d > 1:
        off = g.copy()
        off[:, np.arange(d), np.arange(d)] = 0.0
        if np.max(np.abs(off)) > 1e-12 * max(1.0, np.max(np.abs(g))):
            raise ConfigError("grid discretization needs a diagonal metric")
    diag = np.einsum("njj->nj", g)
    detg = np.prod(diag, axis=1)
    return np.sqrt(detg) / diag[:, axis], np.sqrt(detg)


def discretize(model: ModelSpec, grid: GridSpec | None = None) -> Discretization:
    """Edge-based assembly of the weighted Dirichlet form and mass matrix."""
    if grid is None:
        grid = grid_for_model(model)
    if grid.dim != model.manifold.dimension:
        raise ConfigError("grid dimension does not match the chart")
    axes = grid.axes()
    steps = grid.steps()
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    shape = tuple(len(a) for a in axes)
    N = pts.shape[0]

    vmin = float(np.min(model.V(pts)))

    def density(q):
        return np.exp(-(model.V(q) - vmin))

    # lumped mass: trapezoid weights on non-periodic axes
    _, sqrtg = _diag_metric_factors(model, pts, 0)
    mass = (density(pts) * sqrtg).reshape(shape)
    for j in range(grid.dim):
        if not grid.periodic[j]:
            sl0 = [slice(None)] * grid.dim
            sl1 = [slice(None)] * grid.dim
            sl0[j], sl1[j] = 0, -1
            mass[tuple(sl0)] *= 0.5
            mass[tuple(sl1)] *= 0.5
    mass = mass.ravel() * np.prod(steps)

    rows, cols, vals = [], [], []
    idx = np.arange(N).reshape(shape)
    for j in range(grid.dim):
        n_j = shape[j]
        n_edges = n_j if grid.periodic[j] else n_j - 1
        take = [slice(None)] * grid.dim
        take[j] = np.arange(n_edges)
        p_idx = idx[tuple(take)]
        take[j] = (np.arange(n_edges) + 1) % n_j
        q_idx = idx[tuple(take)]
        mid = pts[p_idx.ravel()].copy()
        mid[:, j] += 0.5 * steps[j]
        gfac, _ = _diag_metric_factors(model, mid, j)
        w = density(mid) * gfac / steps[j] ** 2 * np.prod(steps)
        # transverse boundary cells are half-width on non-periodic axes
        w = w.reshape(p_idx.shape)
        for k in range(grid.dim):
            if k == j or grid.periodic[k]:
                continue
            sl0 = [slice(None)] * grid.dim
            sl1 = [slice(None)] * grid.dim
            sl0[k], sl1[k] = 0, -1
            w[tuple(sl0)] *= 0.5
            w[tuple(sl1)] *= 0.5
        w = w.ravel()
        p = p_idx.ravel()
        q = q_idx.ravel()
        rows += [p, q, p, q]
        cols += [p, q, q, p]
        vals += [w, w, -w, -w]
    S = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N),
    )
    return Discretization(grid=grid, stiffness=S, mass=mass, model=model)


def spectral_gap(disc: Discretization) -> SpectralResult:
    """Smallest nonzero generalized eigenvalue of (stiffness, mass)."""
    S, m = disc.stiffness, disc.mass
    N = S.shape[0]
    if N <= DENSE_LIMIT:
        dinv = 1.0 / np.sqrt(m)
        A = (S.toarray() * dinv[:, None]) * dinv[None, :]
        A = 0.5 * (A + A.T)
        w, v = scipy.linalg.eigh(A, subset_by_index=(0, min(3, N - 1)))
        lam0, lam1 = float(w[0]), float(w[1])
        u = v[:, 1] * dinv
    else:
        scale = float(np.median(S.diagonal() / m))
        sigma = -1e-3 * scale
        w, v = splinalg.eigsh(S, k=4, M=sparse.diags(m), sigma=sigma, which="LM")
        order = np.argsort(w)
        lam0, lam1 = float(w[order[0]]), float(w[order[1]])
        u = v[:, order[1]]
    if abs(lam0) > 1e-6 * max(1.0, abs(lam1)):
        raise NumericError(
            f"constant mode not resolved (lambda0 = {lam0:.3e}); grid disconnected?"
        )
    if lam1 <= 0:
        raise NumericError(f"nonpositive spectral gap {lam1:.3e}")
    u = u / np.sqrt(u @ (m * u))
    resid = S @ u - lam1 * (m * u)
    residual_norm = float(np.linalg.norm(resid))
    const_overlap = abs(np.sum(m * u)) / np.sqrt(np.sum(m))
    if const_overlap > 1e-8:
        raise NumericError(f"eigenvector not mass-orthogonal to constants "
                           f"({const_overlap:.2e})")
    return SpectralResult(lambda1=lam1, eigvec=u, residual_norm=residual_norm,
                          lambda0=lam0)


def refinement_check(model: ModelSpec, grid: GridSpec, rel_tol=1e-3):
    """Recompute the gap on a doubled grid; flags under-resolution."""
    lam = spectral_gap(discretize(model, grid)).lambda1
    fine = GridSpec(grid.lo, grid.hi,
                    tuple(2 * n if p else 2 * n - 1
                          for n, p in zip(grid.npts, grid.periodic)),
                    periodic=grid.periodic)
    lam2 = spectral_gap(discretize(model, fine)).lambda1
    rel = abs(lam2 - lam) / max(abs(lam2), 1e-300)
    return {"lambda1": lam, "lambda1_refined": lam2, "rel_change": rel,
            "under_resolved": bool(rel >= rel_tol)}


@dataclass
class IntegralResult:
    value: float
    normalization: float
    truncation_warning: bool


def integrate_mu(model: ModelSpec, integrand, grid: Box | GridSpec | None = None,
                 detail=False):
    """Tensor-grid trapezoid of the integrand against the normalized
    invariant measure on the (truncated) grid.

    ``integrand`` is an expression/ScalarField or a callable mapping
    (N, d) points to values (used for 1-form pairings).  Boundary mass
    above 1e-4 of the normalization triggers a truncation warning.
    """
    if grid is None:
        grid = model.region
    if isinstance(grid, Box):
        axes = [np.linspace(l, h, n) for l, h, n in zip(grid.lo, grid.hi, grid.npts)]
        periodic = (False,) * grid.dim
    else:
        axes = grid.axes()
        periodic = grid.periodic
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    shape = tuple(len(a) for a in axes)
    steps = [a[1] - a[0] for a in axes]

    w = model.mu_weights(pts).reshape(shape)
    for j, p in enumerate(periodic):
        if not p:
            sl0 = [slice(None)] * len(shape)
            sl1 = [slice(None)] * len(shape)
            sl0[j], sl1[j] = 0, -1
            w[tuple(sl0)] *= 0.5
            w[tuple(sl1)] *= 0.5
    w = w * np.prod(steps)

    z = float(w.sum())
    if z <= 0 or not np.isfinite(z):
        raise NumericError("invariant measure has no mass on the grid")

    boundary_mass = 0.0
    for j, p in enumerate(periodic):
        if p:
            continue
        sl0 = [slice(None)] * len(shape)
        sl1 = [slice(None)] * len(shape)
        sl0[j], sl1[j] = 0, -1
        boundary_mass += float(w[tuple(sl0)].sum() + w[tuple(sl1)].sum())
    truncated = boundary_mass > BOUNDARY_MASS_TOL * z
    if truncated:
        warnings.warn(
            f"boundary cells carry {boundary_mass / z:.2e} of the measure; "
            "integral may be truncation-biased", stacklevel=2)

    if callable(integrand) and not isinstance(integrand, str):
        vals = np.asarray(integrand(pts), dtype=float)
    else:
        vals = make_field(integrand, model.manifold).value(pts)
    value = float(np.sum(w.ravel() * vals) / z)
    if detail:
        return IntegralResult(value=value, normalization=z,
                              truncation_warning=truncated)
    return value


def variance_mu(model: ModelSpec, f, grid=None, detail=False):
    fld = make_field(f, model.manifold)
    m1 = integrate_mu(model, lambda p: fld.value(p), grid, detail=detail)
    m2 = integrate_mu(model, lambda p: fld.value(p) ** 2, grid)
    if detail:
        return IntegralResult(value=m2 - m1.value ** 2,
                              normalization=m1.normalization,
                              truncation_warning=m1.truncation_warning)
    return m2 - m1 ** 2


@dataclass
class OptimizeResult:
    params: tuple
    bound: float
    lambda1: float
    identity_bound: float
    mode: str
    n_evaluations: int
    report: object


def optimize_twist(model: ModelSpec, family: TwistSpec, mode,
                   budget=2000, restarts=5, seed=0, gap_grid=None,
                   lambda1: float | None = None) -> OptimizeResult:
    """Derivative-free maximization of the certified bound over the
    family parameters, with the eigensolver gap as soundness reference.

    Singular or gate-violating parameter vectors are penalized, not
    fatal.  Raises when the optimized bound exceeds the reference gap
    beyond tolerance (a soundness violation would mean a defect in the
    bound machinery).
    """
    k = family.n_params
    if k == 0:
        raise ConfigError("twist family has no free parameters to optimize")
    evals = [0]

    def objective(params):
        evals[0] += 1
        try:
            rep = bound_scan(model, family, mode, params=tuple(params), refine=False)
        except (TwistSingularError, ModeError, NumericError):
            return np.inf
        val = rep.value
        return -val if np.isfinite(val) else np.inf

    rng = np.random.default_rng(seed)
    starts = [np.zeros(k)]
    starts += [0.5 * rng.standard_normal(k) for _ in range(restarts)]
    maxfev = max(50, budget // len(starts))
    best_x, best_val = np.zeros(k), -objective(np.zeros(k))
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"maxfev": maxfev, "xatol": 1e-6, "fatol": 1e-10})
        if -res.fun > best_val:
            best_val, best_x = -res.fun, res.x
    # coordinate polish around the best point
    for j in range(k):
        def along(s):
            z = best_x.copy()
            z[j] = s
            return objective(z)
        r = minimize_scalar(along, bracket=(best_x[j] - 0.25, best_x[j] + 0.25),
                            options={"maxiter": 40})
        if -r.fun > best_val:
            best_val = -r.fun
            best_x[j] = r.x

    report = bound_scan(model, family, mode, params=tuple(best_x), refine=True)
    bound = report.value
    identity_rep = bound_scan(model, family, mode,
                              params=tuple(np.zeros(k)), refine=True)
    if lambda1 is None:
        lam = spectral_gap(discretize(model, gap_grid)).lambda1
    else:
        lam = float(lambda1)
    if bound > lam + 1e-6:
        raise NumericError(
            f"soundness violation: certified bound {bound:.8f} exceeds the "
            f"reference gap {lam:.8f}")
    return OptimizeResult(params=tuple(float(v) for v in best_x), bound=bound,
                          lambda1=lam, identity_bound=identity_rep.value,
                          mode=mode, n_evaluations=evals[0], report=report)
