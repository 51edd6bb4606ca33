"""Exact likelihood ratio of the modified epidemic against the Poisson envelope.

Along a sample evolution y_t(x) with one-step conditional means lambda_t(x),
each (t, x) contributes

    [ p(y | lambda) (1 - kappa(y)) + p(y+1 | lambda) kappa(y+1) ] / p(y | lambda)
        = (1 - kappa(y)) + lambda / (y + 1) * kappa(y+1),

p the Poisson pmf: the observed count y arises either from y red-parent
offspring and no blue, or from y+1 offspring with the single blue.  Factors
where all three previous-generation neighbor sites are empty equal 1, so the
product has finitely many nontrivial terms.  The general form above is
nonnegative for kappa in [0, 1] and is always the one accumulated; the
expanded SIR form 1 - (y - lambda) R / N, which can go negative at desk
scale, is emitted only as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .coupling import kappa_sir, kappa_sis
from .envelope import conditional_means
from .fields import EnvelopeTrajectory


class ImpossibleTransitionError(ValueError):
    """A count appeared where the envelope law puts zero mass (lambda = 0, y > 0)."""


def site_factor(y: int, lam: float, kappa_y: float, kappa_y1: float) -> float:
    """Single-site likelihood factor; equals 1 when both kappas vanish."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if not (0.0 <= kappa_y <= 1.0 and 0.0 <= kappa_y1 <= 1.0):
        raise ValueError("kappa values must lie in [0, 1]")
    if lam == 0.0 and y > 0:
        raise ImpossibleTransitionError(f"y={y} with lambda=0")
    return (1.0 - kappa_y) + lam / (y + 1.0) * kappa_y1


def sir_reduced_factor(y: int, lam: float, R: int, N: int) -> float:
    """Expanded SIR form 1 - (y - lambda) R / N (diagnostic; may be negative)."""
    return 1.0 - (y - lam) * R / N


@dataclass
class LikelihoodResult:
    loglik: float
    flagged: bool                   # an impossible transition was seen
    nontrivial_factors: int
    clamp_events: int
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def likelihood(self) -> float:
        return math.exp(self.loglik)


def loglik(traj: EnvelopeTrajectory, N: int, variant: str,
           alpha: float = 1.0) -> LikelihoodResult:
    """log L over a completed trajectory, with variant-specific diagnostics.

    SIS kappas depend only on the counts; SIR kappas use the site's cumulative
    count R_t(x) = sum_{s<t} y_s(x) read off the same trajectory.  Diagnostics:
    SIS emits the three expansion sums A = sum lam (y-lam)/2N,
    B = sum lam^2 (y-lam)^2 / 8N^2, C = sum ((y-lam)^2 - y)/N; SIR emits the
    centered stochastic sum sum (y-lam) R / N and its quadratic counterpart.
    alpha only labels the increment normalizer N^alpha in the diagnostics.
    """
    if variant not in ("sis", "sir"):
        raise ValueError("variant must be 'sis' or 'sir'")
    if N < 1:
        raise ValueError("N must be positive")
    logs: list[float] = []
    flagged = False
    nontrivial = 0
    clamps = 0
    diag = dict.fromkeys(
        ("a_sum", "b_sum", "c_sum") if variant == "sis"
        else ("delta_rho_sum", "quad_sum", "reduced_loglik"), 0.0)
    reduced_valid = True
    rcum: dict[int, int] = dict(traj.fields[0].counts) if traj.fields else {}
    for t in range(1, len(traj.fields)):
        lam = conditional_means(traj.fields[t - 1])
        cur = traj.fields[t]
        for x in set(lam) | set(cur.counts):
            lm = lam.get(x, 0.0)
            y = cur[x]
            if lm == 0.0:
                if y > 0:
                    flagged = True
                continue
            if variant == "sis":
                ky_raw, ky1_raw = kappa_sis(y, N), kappa_sis(y + 1, N)
            else:
                R = rcum.get(x, 0)
                ky_raw, ky1_raw = kappa_sir(y, R, N), kappa_sir(y + 1, R, N)
            if ky_raw > 1.0 or ky1_raw > 1.0:
                clamps += 1
            f = site_factor(y, lm, min(ky_raw, 1.0), min(ky1_raw, 1.0))
            if f != 1.0:
                nontrivial += 1
            logs.append(math.log(f))
            d = y - lm
            if variant == "sis":
                diag["a_sum"] += lm * d / (2.0 * N)
                diag["b_sum"] += lm * lm * d * d / (8.0 * N * N)
                diag["c_sum"] += (d * d - y) / N
            else:
                diag["delta_rho_sum"] += d * R / N
                diag["quad_sum"] += (d * R) ** 2 / N**2
                rf = sir_reduced_factor(y, lm, R, N)
                if rf > 0 and reduced_valid:
                    diag["reduced_loglik"] += math.log(rf)
                else:
                    reduced_valid = False
        if variant == "sir":
            for x, c in cur.counts.items():
                rcum[x] = rcum.get(x, 0) + c
    if variant == "sir" and not reduced_valid:
        diag["reduced_loglik"] = math.nan
    return LikelihoodResult(math.fsum(logs), flagged, nontrivial, clamps, diag)
