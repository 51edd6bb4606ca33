"""Feller-Watanabe rescaling, density snapshots, martingale-measure increments.

The rescaling divides mass by k, space by sqrt(k), and time by k; under it
critical branching random walks converge to the measure-valued diffusion
limit, and the centered site counts (Y - lambda)/k are the atoms of the
associated orthogonal martingale measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .envelope import conditional_means
from .fields import EnvelopeTrajectory, ParticleField


def feller_scale(field: ParticleField, k: int, phi: Callable[[float], float]) -> float:
    """k^{-1} sum_x phi(x / sqrt(k)) * Y(x): the rescaled integral of phi."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    rk = np.sqrt(k)
    return sum(phi(x / rk) * c for x, c in field.counts.items()) / k


@dataclass
class DensitySnapshot:
    """Rescaled density X(t, .) on the grid Z/sqrt(k), linearly interpolated."""

    k: int
    grid: dict[float, float]   # x = site/sqrt(k) -> Y(site)/sqrt(k)
    t: float                   # time label n/k
    _sites: np.ndarray = None
    _vals: np.ndarray = None

    def __post_init__(self):
        xs = np.array(sorted(self.grid), dtype=float)
        self._sites = xs
        self._vals = np.array([self.grid[x] for x in xs])

    def __call__(self, x: float) -> float:
        """Piecewise-linear value; zero beyond one grid step outside the support hull."""
        xs, vs = self._sites, self._vals
        if xs.size == 0:
            return 0.0
        h = 1.0 / np.sqrt(self.k)
        lo, hi = xs[0] - h, xs[-1] + h
        if x <= lo or x >= hi:
            return 0.0
        xs_ext = np.concatenate([[lo], xs, [hi]])
        vs_ext = np.concatenate([[0.0], vs, [0.0]])
        return float(np.interp(x, xs_ext, vs_ext))

    def integral(self) -> float:
        """Trapezoid integral of the interpolated density (closed form on the grid)."""
        h = 1.0 / np.sqrt(self.k)
        xs, vs = self._sites, self._vals
        if xs.size == 0:
            return 0.0
        xs_ext = np.concatenate([[xs[0] - h], xs, [xs[-1] + h]])
        vs_ext = np.concatenate([[0.0], vs, [0.0]])
        return float(np.trapezoid(vs_ext, xs_ext))


def density_snapshot(field: ParticleField, k: int, n: int = 0) -> DensitySnapshot:
    """X(t, x) = Y(sqrt(k) x) / sqrt(k) at grid points x in Z/sqrt(k), t = n/k."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    rk = np.sqrt(k)
    grid = {}
    lo_hi = field.support
    if lo_hi is not None:
        for s in range(lo_hi[0], lo_hi[1] + 1):
            grid[s / rk] = field[s] / rk
    return DensitySnapshot(k, grid, n / k)


@dataclass
class MMIncrements:
    """Sparse atoms of the orthogonal martingale measure of a trajectory.

    delta[i] = (Y_t(x) - lambda_t(x)) / normalizer at (ts[i], xs[i]);
    lambda_t(x) is the one-step conditional mean (neighbor average / 3).
    """

    k: int
    normalizer: float
    ts: np.ndarray
    xs: np.ndarray
    lam: np.ndarray
    y: np.ndarray

    @property
    def delta(self) -> np.ndarray:
        return (self.y - self.lam) / self.normalizer

    def generation(self, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(sites, lambda, delta) of generation t."""
        m = self.ts == t
        return self.xs[m], self.lam[m], self.delta[m]


def mm_increments(traj: EnvelopeTrajectory, k: int,
                  normalizer: float | None = None) -> MMIncrements:
    """Centered increments Y - lambda over all (t >= 1, x) with lambda > 0 or Y > 0.

    The default normalizer k matches the rescaled atom masses; the likelihood
    diagnostics rescale by N^alpha instead.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    norm = float(normalizer if normalizer is not None else k)
    ts, xs, lams, ys = [], [], [], []
    for t in range(1, len(traj.fields)):
        lam = conditional_means(traj.fields[t - 1])
        sites = set(lam) | set(traj.fields[t].counts)
        for x in sorted(sites):
            ts.append(t)
            xs.append(x)
            lams.append(lam.get(x, 0.0))
            ys.append(traj.fields[t][x])
    return MMIncrements(k, norm, np.array(ts), np.array(xs),
                        np.array(lams, dtype=float), np.array(ys, dtype=float))
