"""Diffusion simulation and transport of frames along paths.

Paths follow the Euler-Maruyama scheme in chart coordinates for the
generator Laplace-Beltrami minus <grad V, grad .> (note: the full
Laplacian, not half, so flat Brownian marginals have variance 2t per
component).  Increments come from counter-based Philox streams keyed by
(seed, path index), which makes every path bit-reproducible regardless
of batching or worker count.

Transport maps are frame components of linear maps T_{x0}M -> T_{X_t}M:

* parallel: midpoint (Cayley) integration of the Christoffel transport
  ODE, re-orthonormalized through polar projection;
* deformed: the parallel step composed with exp(-h * curvature tensor),
  which contracts at the curvature rate;
* twisted-deformed: the deformed maps conjugated by the twist, which is
  algebraically exact and avoids discretizing the twist noise term.

Leaving the chart domain freezes a path at its last in-domain point and
flags it; estimators downstream count such paths as killed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericError, TwistSingularError
from .model import ModelSpec
from .twist import TwistSpec

_FLAT_KINDS = {"euclidean", "interval-with-boundary", "circle", "flat-torus"}


@dataclass
class PathSample:
    times: np.ndarray
    points: np.ndarray
    increments: np.ndarray
    exited: bool
    exit_index: int | None
    seed: int
    path_index: int

    @property
    def h(self):
        return float(self.times[1] - self.times[0])


@dataclass
class TransportResult:
    mode: str
    maps: np.ndarray            # (k+1, d, d), frame components
    path: PathSample
    truncated: bool = False


def brownian_increments(seed, path_index, steps, dim, h):
    """Frame Brownian increments with variance h per component,
    reproducible per (seed, path_index)."""
    gen = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1),
                                                    int(path_index) & (2**64 - 1)]))
    return gen.standard_normal((steps, dim)) * np.sqrt(h)


class PathEngine:
    """Vectorized multi-path simulator with optional transport tracking."""

    def __init__(self, model: ModelSpec, twist: TwistSpec | None = None,
                 params=None):
        self.model = model
        self.man = model.manifold
        self.dim = self.man.dimension
        self.flat = self.man.kind in _FLAT_KINDS
        self.twist_ev = twist.evaluator(model) if twist is not None else None
        self.params = params

    # -- step kernels -----------------------------------------------------------

    def _advance(self, X, dW, h, alive):
        drift = self.model.drift(X)
        E = self.man.frame(X)
        dx = h * drift + np.sqrt(2.0) * np.einsum("nij,nj->ni", E, dW)
        Xn_raw = X + np.where(alive[:, None], dx, 0.0)
        inside = self.man.domain.inside_mask(Xn_raw)
        newly_dead = alive & ~inside
        Xn = np.where((alive & inside)[:, None], Xn_raw, X)
        return self.man.domain.wrap(Xn), Xn_raw, newly_dead

    def _parallel_factor(self, X, Xn_raw, alive):
        """Frame components of the midpoint parallel-transport step factor."""
        d = self.dim
        n = X.shape[0]
        if self.flat:
            return None  # identity
        Xm = 0.5 * (X + Xn_raw)
        dX = np.where(alive[:, None], Xn_raw - X, 0.0)
        Gam = self.man.christoffel(Xm)
        A = -np.einsum("nijk,nj->nik", Gam, dX)
        eye = np.broadcast_to(np.eye(d), (n, d, d))
        C = np.linalg.solve(eye - 0.5 * A, eye + 0.5 * A)
        E = self.man.frame(X)
        Einv_next = self.man.inv_frame(np.where(alive[:, None], Xn_raw, X))
        return Einv_next @ C @ E

    def _contraction_factor(self, X, h):
        """exp(-h * curvature) in frame components (exact, symmetric)."""
        Mbar = self.model.bakry_emery(X)
        if self.dim == 1:
            return np.exp(-h * Mbar)
        Mbar = 0.5 * (Mbar + np.swapaxes(Mbar, -1, -2))
        w, Q = np.linalg.eigh(Mbar)
        return np.einsum("nij,nj,nkj->nik", Q, np.exp(-h * w), Q)

    # -- batched runner -----------------------------------------------------------

    def run(self, starts, t, h, n, seed, *, transport_start=None,
            gronwall_rho=None, batch=None):
        """Simulate ``n`` paths from each start with shared noise.

        Returns a dict with per-start ``terminal`` (n, d) and ``alive``
        (n,) arrays; when ``transport_start`` is given also the final
        deformed maps ``W`` (n, d, d) (and twisted maps ``WB`` when the
        engine has a twist) for that start; when ``gronwall_rho`` is set,
        the per-path maximum over steps of ||W_k|| e^{rho t_k}.
        """
        if h <= 0 or t <= 0 or h > t:
            raise ConfigError(f"need 0 < h <= t, got h={h}, t={t}")
        steps = int(round(t / h))
        d = self.dim
        starts = [np.atleast_1d(np.asarray(s, dtype=float)) for s in starts]
        for s in starts:
            self.model.manifold.check_point(s)
        if batch is None:
            batch = max(500, min(n, int(2e7 / max(1, steps * d))))
        ns = len(starts)
        out = {
            "terminal": [np.empty((n, d)) for _ in range(ns)],
            "alive": [np.empty(n, dtype=bool) for _ in range(ns)],
        }
        track = transport_start is not None
        if track:
            out["W"] = np.empty((n, d, d))
            if self.twist_ev is not None:
                out["WB"] = np.empty((n, d, d))
        if gronwall_rho is not None:
            out["gronwall"] = np.empty(n)

        done = 0
        while done < n:
            m = min(batch, n - done)
            inc = np.empty((m, steps, d))
            for i in range(m):
                inc[i] = brownian_increments(seed, done + i, steps, d, h)
            for s_idx, x0 in enumerate(starts):
                X = np.tile(x0, (m, 1))
                alive = np.ones(m, dtype=bool)
                this_track = track and s_idx == transport_start
                this_gron = gronwall_rho is not None and s_idx == (transport_start or 0)
                if this_track or this_gron:
                    W = np.broadcast_to(np.eye(d), (m, d, d)).copy()
                    gmax = np.zeros(m) if this_gron else None
                for k in range(steps):
                    Xn, Xn_raw, newly_dead = self._advance(X, inc[:, k, :], h, alive)
                    alive_next = alive & ~newly_dead
                    if this_track or this_gron:
                        # maps freeze at exit: the exiting step is not applied
                        F = self._contraction_factor(X, h)
                        P = self._parallel_factor(X, Xn_raw, alive_next)
                        if d == 1:
                            Wn = F * W
                        else:
                            Wn = F @ (P @ W if P is not None else W)
                        W = np.where(alive_next[:, None, None], Wn, W)
                        if this_gron:
                            if d == 1:
                                norms = np.abs(W[:, 0, 0])
                            else:
                                norms = np.linalg.svd(W, compute_uv=False)[:, 0]
                            ratio = norms * np.exp(gronwall_rho * (k + 1) * h)
                            upd = alive_next & np.isfinite(ratio)
                            np.maximum(gmax, np.where(upd, ratio, gmax), out=gmax)
                    X = Xn
                    alive = alive_next
                sl = slice(done, done + m)
                out["terminal"][s_idx][sl] = X
                out["alive"][s_idx][sl] = alive
                if this_track:
                    out["W"][sl] = W
                    if self.twist_ev is not None:
                        b_end = np.swapaxes(self.twist_ev.check_invertible(X, self.params), -1, -2)
                        b_start = np.swapaxes(
                            self.twist_ev.check_invertible(x0[None, :], self.params), -1, -2)[0]
                        out["WB"][sl] = b_end @ W @ np.linalg.inv(b_start)
                if this_gron:
                    out["gronwall"][sl] = gmax
            done += m
        out["exit_fraction"] = [1.0 - a.mean() for a in out["alive"]]
        return out


# -- single-path operations -------------------------------------------------------


def simulate_path(model: ModelSpec, x0, t, h, seed, path_index=0,
                  zero_noise=False) -> PathSample:
    """One Euler-Maruyama trajectory with its full time grid."""
    if h <= 0 or t <= 0 or h > t:
        raise ConfigError(f"need 0 < h <= t, got h={h}, t={t}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    model.manifold.check_point(x0)
    steps = int(round(t / h))
    d = model.manifold.dimension
    inc = (np.zeros((steps, d)) if zero_noise
           else brownian_increments(seed, path_index, steps, d, h))
    eng = PathEngine(model)
    pts = np.empty((steps + 1, d))
    pts[0] = x0
    X = x0[None, :].copy()
    alive = np.ones(1, dtype=bool)
    exited, exit_index = False, None
    for k in range(steps):
        Xn, _, newly_dead = eng._advance(X, inc[k][None, :], h, alive)
        X = Xn
        if newly_dead[0] and not exited:
            exited, exit_index = True, k + 1
        alive = alive & ~newly_dead
        pts[k + 1] = X[0]
    return PathSample(
        times=np.linspace(0.0, steps * h, steps + 1), points=pts,
        increments=inc, exited=exited, exit_index=exit_index,
        seed=int(seed), path_index=int(path_index),
    )


def deterministic_path(model: ModelSpec, times, points) -> PathSample:
    """Wrap an externally supplied point sequence (ODE or holonomy oracles)."""
    times = np.asarray(times, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(times) != len(points):
        raise ConfigError("times and points length mismatch")
    inc = np.zeros((len(times) - 1, model.manifold.dimension))
    return PathSample(times=times, points=points, increments=inc,
                      exited=False, exit_index=None, seed=0, path_index=0)


def _polar(mat):
    u, _, vt = np.linalg.svd(mat)
    return u @ vt


def transport(model: ModelSpec, path: PathSample, mode, twist: TwistSpec | None = None,
              params=None) -> TransportResult:
    """Integrate a transport along a stored path; maps are frame components.

    Modes: ``parallel`` (isometric, polar-projected), ``deformed``
    (parallel step followed by the curvature contraction factor), and
    ``twisted-deformed`` (deformed maps conjugated by the twist; requires
    ``twist``).
    """
    if mode not in ("parallel", "deformed", "twisted-deformed"):
        raise ConfigError(f"unknown transport mode {mode!r}")
    if mode == "twisted-deformed" and twist is None:
        raise ConfigError("twisted-deformed transport needs a twist")
    man = model.manifold
    d = man.dimension
    pts = path.points
    k_end = path.exit_index if path.exited else len(pts) - 1
    maps = np.empty((len(pts), d, d))
    maps[0] = np.eye(d)
    T = np.eye(d)
    for k in range(len(pts) - 1):
        if k >= k_end:
            maps[k + 1] = T
            continue
        x, xn = pts[k], pts[k + 1]
        dt = float(path.times[k + 1] - path.times[k])
        if man.kind in _FLAT_KINDS:
            P = np.eye(d)
        else:
            xm = 0.5 * (x + xn)
            Gam = man.christoffel(xm[None, :])[0]
            A = -np.einsum("ijk,j->ik", Gam, xn - x)
            C = np.linalg.solve(np.eye(d) - 0.5 * A, np.eye(d) + 0.5 * A)
            P = man.inv_frame(xn[None, :])[0] @ C @ man.frame(x[None, :])[0]
        if mode == "parallel":
            T = _polar(P @ T)
        else:
            Mbar = model.bakry_emery(x[None, :])[0]
            F = scipy.linalg.expm(-dt * 0.5 * (Mbar + Mbar.T))
            T = F @ P @ T
        if not np.all(np.isfinite(T)):
            raise NumericError(f"transport diverged at step {k}")
        maps[k + 1] = T
    result = TransportResult(mode=mode, maps=maps, path=path,
                             truncated=bool(path.exited))
    if mode == "twisted-deformed":
        ev = twist.evaluator(model)
        b_path = np.swapaxes(ev.bstar(pts, params), -1, -2)
        sv = np.linalg.svd(b_path, compute_uv=False)
        cond = sv[:, 0] / sv[:, -1]
        bad = ~np.isfinite(cond) | (cond > twist.cond_limit)
        if np.any(bad):
            k_bad = int(np.argmax(bad))
            raise TwistSingularError(float(cond[k_bad]), step_index=k_bad)
        b0_inv = np.linalg.inv(b_path[0])
        result.maps = b_path @ maps @ b0_inv
    return result
