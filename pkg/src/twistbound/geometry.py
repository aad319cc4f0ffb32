"""Chart-based manifold kernels.

Everything downstream works in orthonormal-frame components: the frame E
satisfies E^T g E = I and is fixed as the inverse transpose of the
lower-triangular Cholesky factor of g, so metric adjoints are plain
transposes.  Built-in charts carry a symbolic metric and all derived
quantities (Christoffel symbols, Ricci endomorphism, frames) are exact;
user charts fall back to central finite differences of the metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import ConfigError, DomainError, NumericError
from .expressions import FieldFunction, coord_symbols, parse_expression
from .regions import ChartDomain

# finite-difference steps (relative): first and second derivatives of g
FD_STEP_1 = 1e-5
FD_STEP_2 = 1e-4

_BUILTIN_KINDS = (
    "euclidean",
    "circle",
    "flat-torus",
    "sphere2",
    "hyperbolic-half-plane",
    "interval-with-boundary",
    "user-chart",
)


@dataclass
class ChartPoint:
    coords: np.ndarray
    chart_id: str = "default"

    def __post_init__(self):
        self.coords = np.atleast_1d(np.asarray(self.coords, dtype=float))


def as_point(x, dim=None):
    if isinstance(x, ChartPoint):
        p = x
    else:
        p = ChartPoint(np.atleast_1d(np.asarray(x, dtype=float)))
    if dim is not None and p.coords.shape != (dim,):
        raise ConfigError(f"point has {p.coords.shape[0]} coords, expected {dim}")
    return p


@dataclass
class MetricData:
    """Pointwise bundle: metric, orthonormal frame, connection, curvature."""

    g: np.ndarray
    frame: np.ndarray
    christoffel: np.ndarray  # Gamma[i, j, k] = Gamma^i_{jk}
    ricci_sharp: np.ndarray  # frame components


class ManifoldSpec:
    """A single chart of a Riemannian manifold.

    Parameters are normally produced through the factory functions below
    (:func:`euclidean`, :func:`sphere2`, ...).  ``metric_sym`` is a sympy
    matrix over ``coord_names`` for analytic charts; ``metric_fn`` maps an
    (N, d) point array to an (N, d, d) metric array for numeric charts.
    """

    def __init__(self, kind, dimension, coord_names, domain, metric_sym=None,
                 metric_fn=None, label=None):
        if kind not in _BUILTIN_KINDS:
            raise ConfigError(f"unknown manifold kind {kind!r}")
        if metric_sym is None and metric_fn is None:
            raise ConfigError("manifold needs a symbolic or numeric metric")
        self.kind = kind
        self.dimension = int(dimension)
        self.coord_names = tuple(coord_names)
        self.domain: ChartDomain = domain
        self.metric_sym = metric_sym
        self._metric_fn = metric_fn
        self.label = label or kind
        self.coords = coord_symbols(self.coord_names)
        self._cache = {}

    # -- symbolic assembly -------------------------------------------------

    @property
    def is_symbolic(self):
        return self.metric_sym is not None

    def _sym(self, name, builder):
        if name not in self._cache:
            self._cache[name] = builder()
        return self._cache[name]

    def sym_metric(self):
        return self.metric_sym

    def sym_frame(self):
        def build():
            g = self.metric_sym
            if g.is_diagonal():
                return sp.diag(*[1 / sp.sqrt(g[i, i]) for i in range(g.shape[0])])
            L = g.cholesky(hermitian=False)
            return L.inv().T

        return self._sym("frame", build)

    def sym_christoffel(self):
        def build():
            g = self.metric_sym
            ginv = g.inv()
            n = self.dimension
            Gam = [[[sp.S(0)] * n for _ in range(n)] for _ in range(n)]
            for i in range(n):
                for j in range(n):
                    for k in range(j, n):
                        s = sum(
                            ginv[i, m]
                            * (
                                sp.diff(g[m, k], self.coords[j])
                                + sp.diff(g[m, j], self.coords[k])
                                - sp.diff(g[j, k], self.coords[m])
                            )
                            for m in range(n)
                        )
                        val = sp.simplify(s / 2)
                        Gam[i][j][k] = val
                        Gam[i][k][j] = val
            return Gam

        return self._sym("christoffel", build)

    def sym_ricci(self):
        """Ricci tensor (0,2) in coordinates."""

        def build():
            n = self.dimension
            Gam = self.sym_christoffel()
            ric = sp.zeros(n, n)
            for s_ in range(n):
                for nu in range(s_, n):
                    r = sp.S(0)
                    for mu in range(n):
                        r += sp.diff(Gam[mu][nu][s_], self.coords[mu])
                        r -= sp.diff(Gam[mu][mu][s_], self.coords[nu])
                        for lam in range(n):
                            r += Gam[mu][mu][lam] * Gam[lam][nu][s_]
                            r -= Gam[mu][nu][lam] * Gam[lam][mu][s_]
                    r = sp.simplify(r)
                    ric[s_, nu] = r
                    ric[nu, s_] = r
            return ric

        return self._sym("ricci", build)

    def _field(self, name, exprs):
        key = ("field", name)
        if key not in self._cache:
            self._cache[key] = FieldFunction(self.coords, exprs)
        return self._cache[key]

    # -- vectorized numeric evaluation --------------------------------------

    def metric(self, points):
        """(N, d, d) metric matrices."""
        if self.is_symbolic:
            return self._field("g", self.metric_sym)(points)
        return self._metric_fn(np.atleast_2d(np.asarray(points, dtype=float)))

    def frame(self, points):
        """(N, d, d) orthonormal frames E with E^T g E = I."""
        if self.is_symbolic:
            return self._field("E", self.sym_frame())(points)
        g = self.metric(points)
        try:
            L = np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"metric not positive definite: {exc}") from exc
        return np.linalg.inv(np.swapaxes(L, -1, -2))

    def inv_frame(self, points):
        if self.is_symbolic:
            return self._field("Einv", self.sym_frame().inv())(points)
        return np.linalg.inv(self.frame(points))

    def metric_inv(self, points):
        if self.is_symbolic:
            return self._field("ginv", self.metric_sym.inv())(points)
        return np.linalg.inv(self.metric(points))

    def christoffel(self, points):
        """(N, d, d, d) arrays Gamma[i, j, k]."""
        if self.is_symbolic:
            Gam = self.sym_christoffel()
            flat = [[Gam[i][j][k] for k in range(self.dimension)]
                    for i in range(self.dimension)
                    for j in range(self.dimension)]
            vals = self._field("Gamma", flat)(points)
            n = vals.shape[0]
            d = self.dimension
            return vals.reshape(n, d, d, d)
        return self._christoffel_fd(points)

    def dchristoffel(self, points):
        """(N, l, i, j, k) arrays of coordinate derivatives d_l Gamma^i_{jk}."""
        d = self.dimension
        if self.is_symbolic:
            Gam = self.sym_christoffel()
            flat = [sp.diff(Gam[i][j][k], self.coords[l])
                    for l in range(d) for i in range(d)
                    for j in range(d) for k in range(d)]
            vals = self._field("dGamma", flat)(points)
            return vals.reshape(vals.shape[0], d, d, d, d)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(pts.shape[:1] + (d, d, d, d))
        for l in range(d):
            h = FD_STEP_2 * (1.0 + np.abs(pts[:, l]))
            pp = pts.copy()
            pm = pts.copy()
            pp[:, l] += h
            pm[:, l] -= h
            out[:, l] = (self._christoffel_fd(pp) - self._christoffel_fd(pm)) / (
                2.0 * h
            )[:, None, None, None]
        return out

    def _christoffel_fd(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.dimension
        dg = np.empty(pts.shape[:1] + (d, d, d))  # dg[:, m, i, j] = d_m g_ij
        for m in range(d):
            h = FD_STEP_1 * (1.0 + np.abs(pts[:, m]))
            pp = pts.copy()
            pm = pts.copy()
            pp[:, m] += h
            pm[:, m] -= h
            dg[:, m] = (self.metric(pp) - self.metric(pm)) / (2.0 * h)[:, None, None]
        ginv = np.linalg.inv(self.metric(pts))
        # Gamma^i_{jk} = 1/2 g^{im} (d_j g_{mk} + d_k g_{mj} - d_m g_{jk})
        term = (
            np.einsum("njmk->nmjk", dg)
            + np.einsum("nkmj->nmjk", dg)
            - np.einsum("nmjk->nmjk", dg)
        )
        return 0.5 * np.einsum("nim,nmjk->nijk", ginv, term)

    def ricci_sharp_frame(self, points):
        """(N, d, d) frame components of the Ricci endomorphism."""
        if self.is_symbolic:
            key = ("field", "ricci_frame")
            if key not in self._cache:
                E = self.sym_frame()
                expr = sp.simplify(E.T * self.sym_ricci() * E)
                self._cache[key] = FieldFunction(self.coords, expr)
            return self._cache[key](points)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.dimension
        Gam = self._christoffel_fd(pts)
        dGam = self.dchristoffel(pts)
        # Ricci_{s nu} = R^mu_{s mu nu} with
        # R^r_{s m n} = d_m Gamma^r_{ns} - d_n Gamma^r_{ms}
        #               + Gamma^r_{m l} Gamma^l_{ns} - Gamma^r_{n l} Gamma^l_{ms}
        ric = np.zeros(pts.shape[:1] + (d, d))
        for s_ in range(d):
            for nu in range(d):
                acc = np.zeros(pts.shape[0])
                for mu in range(d):
                    acc += dGam[:, mu, mu, nu, s_] - dGam[:, nu, mu, mu, s_]
                    for lam in range(d):
                        acc += Gam[:, mu, mu, lam] * Gam[:, lam, nu, s_]
                        acc -= Gam[:, mu, nu, lam] * Gam[:, lam, mu, s_]
                ric[:, s_, nu] = acc
        E = self.frame(pts)
        return np.einsum("nai,nab,nbj->nij", E, ric, E)

    def laplacian_drift(self, points):
        """(N, d) coordinate drift of the Laplace-Beltrami part: -g^{jk} Gamma^i_{jk}."""
        if self.is_symbolic:
            key = ("field", "lap_drift")
            if key not in self._cache:
                Gam = self.sym_christoffel()
                ginv = self.metric_sym.inv()
                d = self.dimension
                drift = [
                    sp.simplify(
                        -sum(ginv[j, k] * Gam[i][j][k] for j in range(d) for k in range(d))
                    )
                    for i in range(d)
                ]
                self._cache[key] = FieldFunction(self.coords, drift)
            return self._cache[key](points)
        ginv = self.metric_inv(points)
        Gam = self.christoffel(points)
        return -np.einsum("njk,nijk->ni", ginv, Gam)

    # -- validation ----------------------------------------------------------

    def check_point(self, x):
        p = as_point(x, self.dimension)
        bad = self.domain.violation(p.coords)
        if bad is not None:
            j, v = bad
            raise DomainError(self.coord_names[j], v, self.domain.lo[j], self.domain.hi[j])
        return p

    def __repr__(self):
        return f"ManifoldSpec({self.label}, d={self.dimension})"


# -- factories ---------------------------------------------------------------


def _coord_names(n):
    if n <= 3:
        return ("x", "y", "z")[:n]
    return tuple(f"x{i + 1}" for i in range(n))


def euclidean(n=1):
    names = _coord_names(n)
    dom = ChartDomain(lo=(-np.inf,) * n, hi=(np.inf,) * n)
    return ManifoldSpec("euclidean", n, names, dom, metric_sym=sp.eye(n))


def interval(a, b):
    if not a < b:
        raise ConfigError(f"interval needs a < b, got [{a}, {b}]")
    dom = ChartDomain(lo=(a,), hi=(b,))
    return ManifoldSpec(
        "interval-with-boundary", 1, ("x",), dom, metric_sym=sp.eye(1),
        label=f"interval[{a},{b}]",
    )


def circle(radius=1.0):
    dom = ChartDomain(lo=(0.0,), hi=(2.0 * np.pi,), periodic=(True,))
    g = sp.Matrix([[sp.Float(radius) ** 2]]) if radius != 1.0 else sp.eye(1)
    return ManifoldSpec("circle", 1, ("theta",), dom, metric_sym=g,
                        label=f"circle(r={radius})")


def flat_torus(n=2):
    names = _coord_names(n)
    dom = ChartDomain(lo=(0.0,) * n, hi=(2.0 * np.pi,) * n, periodic=(True,) * n)
    return ManifoldSpec("flat-torus", n, names, dom, metric_sym=sp.eye(n))


def sphere2(margin=0.1):
    """Unit 2-sphere in the spherical chart (theta, phi).

    The chart domain keeps theta away from the poles by ``margin``; phi is
    periodic.
    """
    th, _ = coord_symbols(("theta", "phi"))
    g = sp.diag(1, sp.sin(th) ** 2)
    dom = ChartDomain(
        lo=(margin, 0.0), hi=(np.pi - margin, 2.0 * np.pi), periodic=(False, True)
    )
    return ManifoldSpec("sphere2", 2, ("theta", "phi"), dom, metric_sym=g)


def hyperbolic_half_plane():
    _, y = coord_symbols(("x", "y"))
    g = sp.diag(1 / y ** 2, 1 / y ** 2)
    dom = ChartDomain(
        lo=(-np.inf, 0.0), hi=(np.inf, np.inf), strict_lo=(False, True)
    )
    return ManifoldSpec("hyperbolic-half-plane", 2, ("x", "y"), dom, metric_sym=g)


def user_chart(dimension, metric, coord_names=None, domain=None, symbolic=False):
    """A user-supplied chart.

    ``metric`` is either a nested list of expression strings (evaluated in
    the chart coordinates) or a callable mapping (N, d) points to
    (N, d, d) metric arrays.  Unless ``symbolic`` is set, derivatives of
    expression metrics are still taken by finite differences, which makes
    user charts the independent cross-check route against the analytic
    built-ins.
    """
    names = tuple(coord_names) if coord_names else _coord_names(dimension)
    dom = domain or ChartDomain(lo=(-np.inf,) * dimension, hi=(np.inf,) * dimension)
    if callable(metric):
        return ManifoldSpec("user-chart", dimension, names, dom, metric_fn=metric)
    syms = coord_symbols(names)
    rows = [[parse_expression(e, syms) for e in row] for row in metric]
    mat = sp.Matrix(rows)
    if mat.shape != (dimension, dimension):
        raise ConfigError(f"metric must be {dimension}x{dimension}")
    if symbolic:
        return ManifoldSpec("user-chart", dimension, names, dom, metric_sym=mat)
    fn = FieldFunction(syms, mat)
    return ManifoldSpec("user-chart", dimension, names, dom, metric_fn=fn)


def tabulated_chart(dimension, axes, values, coord_names=None, domain=None):
    """User chart whose metric is interpolated from a tabulated grid.

    ``axes`` is a list of 1-D coordinate arrays and ``values`` an array of
    shape ``grid_shape + (d, d)`` of metric matrices on the tensor grid.
    """
    from scipy.interpolate import RegularGridInterpolator

    values = np.asarray(values, dtype=float)
    interp = RegularGridInterpolator(
        tuple(np.asarray(a, dtype=float) for a in axes),
        values,
        method="cubic" if all(len(a) >= 4 for a in axes) else "linear",
        bounds_error=False,
        fill_value=None,
    )

    def metric_fn(points):
        g = interp(np.atleast_2d(points))
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    names = tuple(coord_names) if coord_names else _coord_names(dimension)
    dom = domain or ChartDomain(
        lo=tuple(float(a[0]) for a in axes), hi=tuple(float(a[-1]) for a in axes)
    )
    return ManifoldSpec("user-chart", dimension, names, dom, metric_fn=metric_fn)


# -- spec operations (single point) -------------------------------------------


def metric_at(m: ManifoldSpec, x) -> np.ndarray:
    p = m.check_point(x)
    g = m.metric(p.coords[None, :])[0]
    if not np.all(np.isfinite(g)):
        raise NumericError(f"metric not finite at {p.coords}")
    return g


def christoffel_at(m: ManifoldSpec, x) -> np.ndarray:
    p = m.check_point(x)
    return m.christoffel(p.coords[None, :])[0]


def ricci_sharp_at(m: ManifoldSpec, x) -> np.ndarray:
    p = m.check_point(x)
    return m.ricci_sharp_frame(p.coords[None, :])[0]


def frame_at(m: ManifoldSpec, x) -> np.ndarray:
    p = m.check_point(x)
    return m.frame(p.coords[None, :])[0]


def metric_data(m: ManifoldSpec, x) -> MetricData:
    return MetricData(
        g=metric_at(m, x),
        frame=frame_at(m, x),
        christoffel=christoffel_at(m, x),
        ricci_sharp=ricci_sharp_at(m, x),
    )
