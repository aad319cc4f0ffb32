"""Coordinate boxes: chart domains and sampling regions with grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Box:
    """An axis-aligned coordinate box with an optional grid resolution."""

    lo: tuple
    hi: tuple
    npts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if self.npts:
            object.__setattr__(self, "npts", tuple(int(v) for v in self.npts))
        if len(self.lo) != len(self.hi):
            raise ConfigError("box lo/hi dimension mismatch")
        if any(l >= h for l, h in zip(self.lo, self.hi)):
            raise ConfigError(f"empty box: lo={self.lo} hi={self.hi}")

    @property
    def dim(self):
        return len(self.lo)

    def axes(self):
        if not self.npts or len(self.npts) != self.dim:
            raise ConfigError("box has no grid resolution configured")
        return [np.linspace(l, h, n) for l, h, n in zip(self.lo, self.hi, self.npts)]

    def grid(self):
        """All grid points as an (N, d) array (C order over the mesh)."""
        axes = self.axes()
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, coords, atol=0.0):
        c = np.asarray(coords, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return bool(np.all(c >= lo - atol) and np.all(c <= hi + atol))

    def clip(self, coords):
        return np.clip(np.asarray(coords, dtype=float), self.lo, self.hi)

    def center(self):
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))


@dataclass(frozen=True)
class ChartDomain:
    """Validity region of a chart.

    Unlike a sampling :class:`Box`, bounds may be infinite, individual
    axes may be periodic (wrapping, never exiting), and lower bounds may
    be strict (open) to exclude coordinate singularities.
    """

    lo: tuple
    hi: tuple
    periodic: tuple = field(default=())
    strict_lo: tuple = field(default=())

    def __post_init__(self):
        d = len(self.lo)
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * d)
        if not self.strict_lo:
            object.__setattr__(self, "strict_lo", (False,) * d)

    @property
    def dim(self):
        return len(self.lo)

    def violation(self, coords):
        """Return (axis, value) of the first out-of-domain coordinate, or None."""
        c = np.asarray(coords, dtype=float)
        for j in range(self.dim):
            if self.periodic[j]:
                continue
            v = c[j]
            lo_ok = v > self.lo[j] if self.strict_lo[j] else v >= self.lo[j]
            if not (lo_ok and v <= self.hi[j]):
                return j, float(v)
        return None

    def inside_mask(self, points):
        """Vectorized in-domain test for an (N, d) array."""
        pts = np.atleast_2d(points)
        ok = np.ones(pts.shape[0], dtype=bool)
        for j in range(self.dim):
            if self.periodic[j]:
                continue
            v = pts[:, j]
            if self.strict_lo[j]:
                ok &= v > self.lo[j]
            else:
                ok &= v >= self.lo[j]
            ok &= v <= self.hi[j]
        return ok

    def wrap(self, points, period=2.0 * np.pi):
        """Wrap periodic axes into [0, period); non-periodic axes untouched."""
        pts = np.array(points, dtype=float, copy=True)
        for j in range(self.dim):
            if self.periodic[j]:
                pts[..., j] %= period
        return pts
