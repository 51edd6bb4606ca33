"""Offspring laws for the branching envelope.

A particle at x places independent offspring counts at x-1, x, x+1.  Per
offset the count is Binomial(N, 1/(3N)) (village of size N) or its Poisson(1/3)
limit, so the mean total offspring is exactly 1: the walk is critical.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

OFFSETS = (-1, 0, 1)


class Kind(enum.Enum):
    VILLAGE_BINOMIAL = "binomial"
    POISSON_LIMIT = "poisson"


@dataclass(frozen=True)
class OffspringLaw:
    """Per-offset offspring distribution of the envelope (d=1, fan-out {-1,0,+1})."""

    kind: Kind
    N: int | None = None

    def __post_init__(self):
        if self.kind is Kind.VILLAGE_BINOMIAL:
            if self.N is None or self.N < 1:
                raise ValueError("VillageBinomial needs a positive village size N")
        elif self.N is not None:
            raise ValueError("PoissonLimit takes no village size")

    @property
    def per_offset_mean(self) -> Fraction:
        return Fraction(1, 3)

    @property
    def total_mean(self) -> Fraction:
        # criticality: three offsets, mean 1/3 each
        return Fraction(1)

    def pgf_total(self, s: float) -> float:
        """Probability generating function of the total offspring count."""
        if self.kind is Kind.POISSON_LIMIT:
            return float(np.exp(s - 1.0))
        n, p = 3 * self.N, 1.0 / (3 * self.N)
        return float((1.0 - p + p * s) ** n)


def village_binomial(N: int) -> OffspringLaw:
    return OffspringLaw(Kind.VILLAGE_BINOMIAL, N)


def poisson_limit() -> OffspringLaw:
    return OffspringLaw(Kind.POISSON_LIMIT)


def sample_offspring(law: OffspringLaw, rng: np.random.Generator) -> tuple[int, int, int]:
    """Draw the (left, hold, right) offspring counts of a single particle."""
    if law.kind is Kind.POISSON_LIMIT:
        c = rng.poisson(1.0 / 3.0, 3)
    else:
        c = rng.binomial(law.N, 1.0 / (3 * law.N), 3)
    return int(c[0]), int(c[1]), int(c[2])


def sample_offspring_many(law: OffspringLaw, reps: int,
                          rng: np.random.Generator) -> np.ndarray:
    """[reps, 3] array of per-offset offspring counts over independent particles."""
    if law.kind is Kind.POISSON_LIMIT:
        return rng.poisson(1.0 / 3.0, (reps, 3))
    return rng.binomial(law.N, 1.0 / (3 * law.N), (reps, 3))


def sample_totals(law: OffspringLaw, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Vector of total offspring counts over `reps` independent particles."""
    if law.kind is Kind.POISSON_LIMIT:
        return rng.poisson(1.0, reps)
    # sum of three independent Binomial(N, p) with equal p is Binomial(3N, p)
    return rng.binomial(3 * law.N, 1.0 / (3 * law.N), reps)


def _falling(n: int, r: int) -> int:
    out = 1
    for i in range(r):
        out *= n - i
    return out


def factorial_moment(law: OffspringLaw, r: int) -> Fraction:
    """Exact r-th descending factorial moment E[T(T-1)...(T-r+1)] of the total count.

    The three-fold convolution of Binomial(N, p) at equal p is Binomial(3N, p),
    whose factorial moments are (3N)(3N-1)...(3N-r+1) p^r; the Poisson(1) limit
    has every factorial moment equal to 1.
    """
    if r < 1:
        raise ValueError("factorial moment order must be >= 1")
    if law.kind is Kind.POISSON_LIMIT:
        return Fraction(1)
    return Fraction(_falling(3 * law.N, r), (3 * law.N) ** r)


def offset_factorial_moment(law: OffspringLaw, r: int) -> Fraction:
    """Exact r-th descending factorial moment of a single per-offset count."""
    if r < 0:
        raise ValueError("order must be >= 0")
    if r == 0:
        return Fraction(1)
    if law.kind is Kind.POISSON_LIMIT:
        return Fraction(1, 3 ** r)
    return Fraction(_falling(law.N, r), (3 * law.N) ** r)
