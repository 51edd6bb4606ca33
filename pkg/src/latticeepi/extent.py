"""Exit law of the measure-valued limit: P(range stays inside an interval).

For the critical measure-valued limit with mass curvature c, the function
u_D(x) = -log P(range subset of D | unit mass at x) on D = (0, a) is the
unique solution of u'' = c u^2 blowing up at both endpoints; for the
half-line, u(x) = 6/(c x^2) exactly.  The probability for a finite initial
measure is exp(-sum_i mass_i u(x_i)) by branching superposition.

Two independent numeric routes are provided and cross-checked:

* shooting: integrate the IVP from the symmetric midpoint (u = u_min,
  u' = 0) outward, locate the blow-up via the asymptotic layer
  u ~ 6/(c s^2) near the boundary, and root-find u_min so the blow-up
  lands exactly on the endpoint (authoritative route);
* first integral: u'^2/2 = c (u^3 - u_min^3)/3 turns distances into
  quadratures, fixing u_min in closed form through the constant
  I1 = integral_1^inf dw / sqrt(w^3 - 1) and u(x) by root-finding.

The same profile has a closed form through the Weierstrass elliptic
function: u_D(x) = 6 wp(x) over the triangular (equianharmonic, g2 = 0)
lattice with real period a, which the tests pin against both routes.

The envelope's limit has curvature c = 3/2: offspring variance 1 over
step variance 2/3 (uniform {-1, 0, +1} displacements).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

# offspring variance / displacement variance for the critical village envelope
DEFAULT_CURVATURE = 1.5

_U_STOP = 1.0e9          # switch from the IVP to the blow-up layer u ~ 6/(c s^2)
_IVP_TOL = 1.0e-12


class ExitSolverError(RuntimeError):
    """Shooting failed to bracket or converge; carries the residual report."""


class PoleError(ValueError):
    """wp evaluated at (numerically) a lattice point."""


@functools.lru_cache(maxsize=1)
def blowup_distance_constant() -> float:
    """I1 = integral_1^inf dw / sqrt(w^3 - 1) (substituted to remove both endpoints)."""
    f = lambda s: 2.0 * s / np.sqrt((1.0 + s * s) ** 3 - 1.0)
    val, _ = integrate.quad(f, 0.0, 50.0, limit=200)
    tail, _ = integrate.quad(f, 50.0, np.inf, limit=200)
    return val + tail


def halfline_profile(x: float, c: float = DEFAULT_CURVATURE) -> float:
    """u(x) = 6/(c x^2): the exact half-line solution of u'' = c u^2."""
    if x <= 0:
        raise ValueError("x must be positive")
    return 6.0 / (c * x * x)


def u_min_quadrature(a: float, c: float) -> float:
    """Midpoint value from the first integral: a/2 = sqrt(3/(2c)) I1 / sqrt(u_min)."""
    i1 = blowup_distance_constant()
    return 6.0 * i1 * i1 / (c * a * a)


def _distance_to_boundary(U: float, u_min: float, c: float) -> float:
    """Quadrature for the distance from the point where u = U to the blow-up endpoint.

    d(U) = integral_U^inf du / sqrt((2c/3)(u^3 - u_min^3)), substituted u = U + y^2,
    which removes both the u_min endpoint singularity and the infinite tail.
    """
    pref = math.sqrt(2.0 * c / 3.0)

    def g(y):
        u = U + y * y
        return 2.0 * y / (pref * np.sqrt(u**3 - u_min**3))

    val, _ = integrate.quad(g, 0.0, 20.0 * max(1.0, U) ** 0.25, limit=300)
    tailstart = 20.0 * max(1.0, U) ** 0.25
    tail, _ = integrate.quad(g, tailstart, np.inf, limit=300)
    return val + tail


@dataclass
class ExitProfile:
    """Blow-up profile u_D on D = (0, a) for u'' = c u^2."""

    a: float
    c: float
    u_min: float               # value at the midpoint a/2
    grid_x: np.ndarray
    grid_u: np.ndarray
    _dense_sigma: object       # dense IVP solution in sigma = |x - a/2|
    _sigma_stop: float         # beyond this, the boundary layer formula applies

    def __call__(self, x: float) -> float:
        if not 0.0 < x < self.a:
            raise ValueError(f"x={x} outside (0, {self.a})")
        sigma = abs(x - self.a / 2.0)
        if sigma <= self._sigma_stop:
            return float(self._dense_sigma(sigma)[0])
        d = self.a / 2.0 - sigma   # distance to the nearest endpoint
        return 6.0 / (self.c * d * d)

    def quadrature_value(self, x: float) -> float:
        """Independent first-integral evaluation of u_D(x)."""
        if not 0.0 < x < self.a:
            raise ValueError(f"x={x} outside (0, {self.a})")
        d = min(x, self.a - x)
        if abs(d - self.a / 2.0) < 1e-14 * self.a:
            return self.u_min
        hi = 4.0 * 6.0 / (self.c * d * d) + 2.0 * self.u_min
        return float(optimize.brentq(
            lambda U: _distance_to_boundary(U, self.u_min, self.c) - d,
            self.u_min * (1.0 + 1e-13), hi, xtol=1e-13, rtol=8.9e-16, maxiter=200))


def _shoot(u_mid: float, a: float, c: float):
    """Integrate outward from the midpoint; return (blow-up offset, dense sol, sigma_stop).

    The offset is (predicted blow-up sigma) - a/2: zero when u_mid is right.
    """
    def rhs(_s, y):
        return [y[1], c * y[0] * y[0]]

    def event(_s, y):
        return y[0] - _U_STOP
    event.terminal = True
    event.direction = 1

    sol = integrate.solve_ivp(rhs, (0.0, a), [u_mid, 0.0], method="DOP853",
                              rtol=_IVP_TOL, atol=1e-10 * u_mid, dense_output=True,
                              events=event, max_step=a / 16.0)
    if not sol.t_events[0].size:
        raise ExitSolverError(
            f"no blow-up before sigma={sol.t[-1]:.6g} (u_mid={u_mid:.6g}); "
            f"final state {sol.y[:, -1]}")
    s_stop = float(sol.t_events[0][0])
    u_stop = float(sol.sol(s_stop)[0])
    # remaining distance from the asymptotic layer u ~ 6/(c s^2)
    delta = math.sqrt(6.0 / (c * u_stop))
    return s_stop + delta - a / 2.0, sol.sol, s_stop


def solve_exit_ode(a: float, c: float = DEFAULT_CURVATURE,
                   grid_points: int = 257) -> ExitProfile:
    """Solve u'' = c u^2 on (0, a) with blow-up boundary values.

    Shooting from the symmetric midpoint; the quadrature value of u_min seeds
    the bracket, but the root is found on the IVP alone.
    """
    if a <= 0 or c <= 0:
        raise ValueError("need a > 0 and c > 0")
    seed = u_min_quadrature(a, c)
    lo, hi = 0.9 * seed, 1.1 * seed
    flo, _, _ = _shoot(lo, a, c)
    fhi, _, _ = _shoot(hi, a, c)
    tries = 0
    while flo * fhi > 0 and tries < 40:
        lo *= 0.8
        hi *= 1.25
        flo, _, _ = _shoot(lo, a, c)
        fhi, _, _ = _shoot(hi, a, c)
        tries += 1
    if flo * fhi > 0:
        raise ExitSolverError(
            f"cannot bracket the midpoint value near {seed:.6g}: "
            f"residuals {flo:.3e}, {fhi:.3e}")
    u_mid = optimize.brentq(lambda u0: _shoot(u0, a, c)[0], lo, hi,
                            xtol=1e-15 * seed, rtol=8.9e-16, maxiter=200)
    resid, dense, s_stop = _shoot(u_mid, a, c)
    if abs(resid) > 1e-8 * a:
        raise ExitSolverError(f"blow-up offset {resid:.3e} after convergence")
    xs = np.linspace(a / (grid_points + 1), a - a / (grid_points + 1), grid_points)
    prof = ExitProfile(a, c, u_mid, xs, np.empty(grid_points), dense, s_stop)
    prof.grid_u = np.array([prof(x) for x in xs])
    return prof


# -- Weierstrass elliptic function ----------------------------------------------

@dataclass(frozen=True)
class EquianharmonicLattice:
    """Triangular period lattice s * {m e^{i pi/3} + n e^{-i pi/3}} (g2 = 0).

    `scale` s is the real period; `radius` truncates the direct sum (in units
    of s).  The conventional construction for an interval of length a uses the
    generator sqrt(6) a e^{i pi/3} and its conjugate.
    """

    scale: float
    radius: float = 80.0

    @classmethod
    def for_interval(cls, a: float, radius: float = 80.0) -> "EquianharmonicLattice":
        return cls(scale=math.sqrt(6.0) * a, radius=radius)

    @property
    def generators(self) -> tuple[complex, complex]:
        w = self.scale * np.exp(1j * np.pi / 3.0)
        return complex(w), complex(w.conjugate())

    @functools.cached_property
    def points(self) -> np.ndarray:
        """Nonzero lattice points in the truncation disk (symmetric under negation).

        The index bound 2R/sqrt(3) covers the disk: |m w1 + n w2|^2 =
        s^2 (m^2 + n^2 + mn) >= 3 s^2 n^2 / 4, so clipping indices at R would
        cut hexagonal orbits and spoil the exact g2 = 0 cancellation.
        """
        w1, w2 = self.generators
        M = int(math.ceil(self.radius * 2.0 / math.sqrt(3.0))) + 2
        ms = np.arange(-M, M + 1)
        A, B = np.meshgrid(ms, ms)
        om = A.ravel() * w1 + B.ravel() * w2
        om = om[np.abs(om) > 1e-12 * self.scale]
        return om[np.abs(om) <= self.radius * self.scale]

    @functools.cached_property
    def eisenstein(self) -> tuple[complex, complex]:
        """(g2, g3) from a wide reference disk (radius 400 scale units)."""
        wide = EquianharmonicLattice(self.scale, radius=400.0) if self.radius < 400 else self
        om = wide.points
        g2 = 60.0 * np.sum(om**-4.0)
        g3 = 140.0 * np.sum(om**-6.0)
        return complex(g2), complex(g3)


def weierstrass_p(z: complex, lattice: EquianharmonicLattice) -> complex:
    """wp(z) = 1/z^2 + sum' [1/(z-w)^2 - 1/w^2], truncated with tail corrections.

    The truncated tail is expanded in Eisenstein sums: the z^2 coefficient uses
    g2 = 0 exactly (hexagonal symmetry), the z^4 coefficient the cached g3.
    """
    z = complex(z)
    om = lattice.points
    tol = 1e-9 * lattice.scale
    if abs(z) < tol or np.min(np.abs(z - om)) < tol:
        raise PoleError(f"z={z} is within tolerance of a lattice point")
    s = 1.0 / (z * z) + np.sum(1.0 / (z - om) ** 2 - 1.0 / om**2)
    # tail sum_{|w|>R} [...] = 3 z^2 S4_tail + 5 z^4 S6_tail + O(z^6 S8)
    s4_disk = np.sum(om**-4.0)
    s6_disk = np.sum(om**-6.0)
    _, g3 = lattice.eisenstein
    s4_tail = -s4_disk                  # full-lattice S4 = g2/60 = 0
    s6_tail = g3 / 140.0 - s6_disk
    return complex(s + 3.0 * z**2 * s4_tail + 5.0 * z**4 * s6_tail)


def exit_profile_via_wp(x: float, a: float, c: float = DEFAULT_CURVATURE) -> float:
    """u_D(x) through the elliptic closed form 6 wp(x; period a) / (2c/3...).

    For c = 1 the identity is u_D = 6 wp(x) on the real-period-a triangular
    lattice; general c rescales the profile by 1/c.
    """
    lat = EquianharmonicLattice(scale=a)
    return float(np.real(weierstrass_p(x, lat))) * 6.0 / c


@dataclass
class ExitProbability:
    probability: float
    u_values: list[float]
    outside_support: bool = False


def exit_probability(initial: list[tuple[float, float]], a: float,
                     c: float = DEFAULT_CURVATURE,
                     profile: ExitProfile | None = None) -> ExitProbability:
    """P(range stays in (0, a)) = exp(-sum_i mass_i u_D(x_i)).

    `initial` is a list of (position, mass).  Mass at or outside the boundary
    makes the probability 0 (flagged).  Superposition makes -log P linear in
    the initial measure: doubling masses squares the probability.
    """
    for x, mass in initial:
        if mass < 0:
            raise ValueError("masses must be nonnegative")
    charged = [(x, m) for x, m in initial if m > 0]
    if any(not 0.0 < x < a for x, _ in charged):
        return ExitProbability(0.0, [], outside_support=True)
    if not charged:
        return ExitProbability(1.0, [])
    prof = profile or solve_exit_ode(a, c)
    us = [prof(x) for x, _ in charged]
    log_p = -math.fsum(m * u for (_, m), u in zip(charged, us))
    return ExitProbability(math.exp(log_p), us)
