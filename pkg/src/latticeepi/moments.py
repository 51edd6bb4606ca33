"""Exact moments of branching-random-walk occupation counts.

Everything here is exact rational arithmetic; the Monte Carlo estimators at
the bottom are the independent check, never the source of expected values.

Two exact routes are implemented and cross-checked:

* a last-common-ancestor recursion: conditioning the m-th power of Y_n(x) on
  the generation k and location z where the involved particles last share an
  ancestor gives a boundary kernel term plus, for k < n, partition sums
  weighted by the factorial moments kappa_r of the total offspring count and
  by the slot-multiplicity coefficient m!/(prod m_i! prod c_j!), the factors
  being lower moments at horizon n-k-1 (offspring are born one generation
  after the ancestor).  With the total-offspring kappas and uniform offsets
  this is exact for the Poisson limit law.
* a first-step recursion valid for any per-offset law: Y_n(x) is a sum over
  the three offsets of compound sums of i.i.d. copies of Y_{n-1}, and compound
  moments expand over set partitions with per-offset factorial moments.

The two-time increment moments E[(Y_n(x) - Y_{n+h}(x))^m] get the analogous
ancestor decomposition (boundary terms P^s +- P^t, mixed-sign recursion for
ancestors before generation s, plus the terms where the ancestor is itself an
observed generation-s particle or lives in [s, t)), cross-checked against an
exact joint-moment route and MC.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .offspring import (Kind, OffspringLaw, factorial_moment,
                        offset_factorial_moment, poisson_limit)
from .rng import keyed_generator

THIRD = Fraction(1, 3)


# -- transition kernel ---------------------------------------------------------

@lru_cache(maxsize=None)
def _kernel_row(n: int) -> dict[int, Fraction]:
    if n == 0:
        return {0: Fraction(1)}
    prev = _kernel_row(n - 1)
    row: dict[int, Fraction] = {}
    for x, p in prev.items():
        for dx in (-1, 0, 1):
            row[x + dx] = row.get(x + dx, Fraction(0)) + p * THIRD
    return row


def kernel_power(n: int, x: int) -> Fraction:
    """P^n(0, x) for the nearest-neighbor walk with holding (uniform on {-1,0,1})."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return _kernel_row(n).get(x, Fraction(0))


# -- partition machinery -------------------------------------------------------

@lru_cache(maxsize=None)
def partitions(m: int, max_part: int | None = None) -> tuple[tuple[int, ...], ...]:
    """Integer partitions of m as nonincreasing tuples."""
    if m == 0:
        return ((),)
    mp = m if max_part is None else min(max_part, m)
    out = []
    for first in range(mp, 0, -1):
        for rest in partitions(m - first, first):
            out.append((first,) + rest)
    return tuple(out)


def slot_multiplicity(parts: tuple[int, ...]) -> int:
    """Ways to split m labeled slots into unordered groups of these sizes."""
    m = sum(parts)
    denom = 1
    for p in parts:
        denom *= math.factorial(p)
    mult: dict[int, int] = {}
    for p in parts:
        mult[p] = mult.get(p, 0) + 1
    for c in mult.values():
        denom *= math.factorial(c)
    return math.factorial(m) // denom


@lru_cache(maxsize=None)
def colored_partitions(a: int, b: int) -> tuple[tuple[tuple[tuple[int, int], ...], int], ...]:
    """Partitions of a multiset of a red + b blue labeled slots into blocks.

    Yields (block-type tuple, coefficient) where block types (i, j) give each
    block's red/blue slot counts and the coefficient counts the set partitions
    realizing that type multiset: a! b! / (prod_B i_B! j_B! * prod_type c_type!).
    """
    types = [(i, j) for i in range(a + 1) for j in range(b + 1) if i + j >= 1]
    types.sort(reverse=True)
    results: list[tuple[tuple[tuple[int, int], ...], int]] = []

    def rec(idx: int, ra: int, rb: int, chosen: list[tuple[int, int]]):
        if ra == 0 and rb == 0:
            blocks = tuple(chosen)
            denom = 1
            for (i, j) in blocks:
                denom *= math.factorial(i) * math.factorial(j)
            mult: dict[tuple[int, int], int] = {}
            for bl in blocks:
                mult[bl] = mult.get(bl, 0) + 1
            for c in mult.values():
                denom *= math.factorial(c)
            coeff = math.factorial(a) * math.factorial(b) // denom
            results.append((blocks, coeff))
            return
        if idx == len(types):
            return
        i, j = types[idx]
        max_use_a = ra // i if i else None
        max_use_b = rb // j if j else None
        cands = [c for c in (max_use_a, max_use_b) if c is not None]
        max_use = min(cands)
        for use in range(max_use, -1, -1):
            rec(idx + 1, ra - use * i, rb - use * j, chosen + [(i, j)] * use)

    rec(0, a, b, [])
    return tuple(results)


def _compositions3(m: int):
    for a in range(m + 1):
        for b in range(m - a + 1):
            yield a, b, m - a - b


def _multinomial3(m: int, a: int, b: int, c: int) -> int:
    return math.factorial(m) // (math.factorial(a) * math.factorial(b) * math.factorial(c))


# -- first-step recursion (exact for any per-offset law) ------------------------

def _law_key(law: OffspringLaw):
    return (law.kind, law.N)


@lru_cache(maxsize=None)
def _moment_first_step(n: int, x: int, m: int, law_key) -> Fraction:
    kind, N = law_key
    law = OffspringLaw(kind, N)
    if m == 0:
        return Fraction(1)
    if n == 0:
        return Fraction(1 if x == 0 else 0)
    if abs(x) > n:
        return Fraction(0)

    def compound(offset: int, r: int) -> Fraction:
        # E[(sum of xi_offset iid copies of Y_{n-1}(x-offset))^r]
        if r == 0:
            return Fraction(1)
        tot = Fraction(0)
        for parts in partitions(r):
            prod = Fraction(slot_multiplicity(parts)) * offset_factorial_moment(law, len(parts))
            for p in parts:
                prod *= _moment_first_step(n - 1, x - offset, p, law_key)
                if prod == 0:
                    break
            tot += prod
        return tot

    total = Fraction(0)
    for a, b, c in _compositions3(m):
        term = Fraction(_multinomial3(m, a, b, c))
        for off, e in ((-1, a), (0, b), (1, c)):
            if e:
                term *= compound(off, e)
            if term == 0:
                break
        total += term
    return total


# -- last-common-ancestor recursion (exact for the Poisson limit) ---------------

@lru_cache(maxsize=None)
def _moment_lce(n: int, x: int, m: int, law_key) -> Fraction:
    kind, N = law_key
    law = OffspringLaw(kind, N)
    if m == 0:
        return Fraction(1)
    if n == 0:
        return Fraction(1 if x == 0 else 0)
    if abs(x) > n:
        return Fraction(0)
    total = kernel_power(n, x)  # all m slots taken by one generation-n particle
    for k in range(n):
        h = n - k - 1
        for z in range(max(-k, x - h - 1), min(k, x + h + 1) + 1):
            pk = kernel_power(k, z)
            if pk == 0:
                continue
            inner = Fraction(0)
            for r in range(2, m + 1):
                kr = factorial_moment(law, r)
                if kr == 0:
                    continue
                psum = Fraction(0)
                for parts in partitions(m):
                    if len(parts) != r:
                        continue
                    prod = Fraction(slot_multiplicity(parts))
                    for p in parts:
                        s = sum(_moment_lce(h, x - z - j, p, law_key) for j in (-1, 0, 1))
                        prod *= s * THIRD
                        if prod == 0:
                            break
                    psum += prod
                inner += kr * psum
            total += pk * inner
    return total


def moment(n: int, x: int, m: int, law: OffspringLaw | None = None) -> Fraction:
    """Exact E[Y_n(x)^m] for the envelope from one particle at the origin.

    Poisson limit: last-common-ancestor recursion.  VillageBinomial: first-step
    recursion (the ancestor form with total-offspring kappas is exact only in
    the Poisson limit).  m = 1 reduces to the kernel power exactly.
    """
    if m < 1:
        raise ValueError("moment order m must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    law = law or poisson_limit()
    if law.kind is Kind.POISSON_LIMIT:
        return _moment_lce(n, x, m, _law_key(law))
    return _moment_first_step(n, x, m, _law_key(law))


# -- exact joint moments at two times -------------------------------------------

@lru_cache(maxsize=None)
def _joint_moment(s: int, t: int, x: int, a: int, b: int, law_key) -> Fraction:
    """E[Y_s(x)^a * Y_t(x)^b], 0 <= s < t, via the first-step decomposition."""
    kind, N = law_key
    law = OffspringLaw(kind, N)
    if a == 0 and b == 0:
        return Fraction(1)
    if a == 0:
        return _moment_first_step(t, x, b, law_key)
    if b == 0:
        return _moment_first_step(s, x, a, law_key)
    if s == 0:
        if x != 0:
            return Fraction(0)
        return _moment_first_step(t, 0, b, law_key)
    if abs(x) > s:  # Y_s(x) = 0 surely, and a >= 1
        return Fraction(0)

    def compound2(offset: int, p: int, q: int) -> Fraction:
        if p == 0 and q == 0:
            return Fraction(1)
        tot = Fraction(0)
        for blocks, coeff in colored_partitions(p, q):
            prod = Fraction(coeff) * offset_factorial_moment(law, len(blocks))
            for (i, j) in blocks:
                prod *= _joint_moment(s - 1, t - 1, x - offset, i, j, law_key)
                if prod == 0:
                    break
            tot += prod
        return tot

    total = Fraction(0)
    for a1, a2, a3 in _compositions3(a):
        ca = Fraction(_multinomial3(a, a1, a2, a3))
        for b1, b2, b3 in _compositions3(b):
            term = ca * _multinomial3(b, b1, b2, b3)
            for off, (p, q) in ((-1, (a1, b1)), (0, (a2, b2)), (1, (a3, b3))):
                if p or q:
                    term *= compound2(off, p, q)
                if term == 0:
                    break
            total += term
    return total


def _increment_via_joint(s: int, t: int, x: int, m: int, law_key) -> Fraction:
    total = Fraction(0)
    for c in range(m + 1):
        sign = -1 if c % 2 else 1
        total += sign * math.comb(m, c) * _joint_moment(s, t, x, m - c, c, law_key)
    return total


# -- increment moments via the ancestor decomposition ---------------------------

@lru_cache(maxsize=None)
def _increment_lce(s: int, t: int, x: int, m: int, law_key) -> Fraction:
    """E[(Y_s(x) - Y_t(x))^m], 0 <= s < t, Poisson-limit ancestor decomposition."""
    if m == 0:
        return Fraction(1)
    if m == 1:
        return kernel_power(s, x) - kernel_power(t, x)
    kind, N = law_key
    law = OffspringLaw(kind, N)
    if s == 0:
        # (1{x=0} - Y_t(x))^m expands over the deterministic first coordinate
        total = Fraction(0)
        for c in range(m + 1):
            if x != 0 and c < m:
                continue
            sign = -1 if c % 2 else 1
            total += sign * math.comb(m, c) * _moment_lce(t, x, c, law_key)
        return total

    sign_m = -1 if m % 2 else 1
    total = kernel_power(s, x) + sign_m * kernel_power(t, x)

    # ancestor strictly before generation s: groups carry the signed difference
    for k in range(s):
        hs, ht = s - k - 1, t - k - 1
        for z in range(max(-k, x - ht - 1), min(k, x + ht + 1) + 1):
            pk = kernel_power(k, z)
            if pk == 0:
                continue
            inner = Fraction(0)
            for parts in partitions(m):
                r = len(parts)
                if r < 2:
                    continue
                kr = factorial_moment(law, r)
                prod = Fraction(slot_multiplicity(parts)) * kr
                for p in parts:
                    ssum = sum(_increment_lce(hs, ht, x - z - j, p, law_key)
                               for j in (-1, 0, 1))
                    prod *= ssum * THIRD
                    if prod == 0:
                        break
                inner += prod
            total += pk * inner

    # ancestor is itself an observed generation-s particle at x
    ps = kernel_power(s, x)
    if ps != 0:
        extra = Fraction(0)
        for m0 in range(1, m):
            sign = -1 if (m - m0) % 2 else 1
            extra += sign * math.comb(m, m0) * _moment_lce(t - s, 0, m - m0, law_key)
        total += ps * extra

    # ancestor in [s, t): every observed particle of the tuple sits in generation t
    for k in range(s, t):
        h = t - k - 1
        for z in range(max(-k, x - h - 1), min(k, x + h + 1) + 1):
            pk = kernel_power(k, z)
            if pk == 0:
                continue
            inner = Fraction(0)
            for parts in partitions(m):
                r = len(parts)
                if r < 2:
                    continue
                kr = factorial_moment(law, r)
                prod = Fraction(slot_multiplicity(parts)) * kr
                for p in parts:
                    ssum = sum(_moment_lce(h, x - z - j, p, law_key) for j in (-1, 0, 1))
                    prod *= ssum * THIRD
                    if prod == 0:
                        break
                inner += prod
            total += pk * sign_m * inner
    return total


def increment_moment(n: int, alpha: float, x: int, m: int,
                     law: OffspringLaw | None = None) -> Fraction:
    """Exact E[(Y_n(x) - Y_{n+[alpha n]}(x))^m]; [alpha n] = 0 gives 0 exactly."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if m < 0:
        raise ValueError("m must be >= 0")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    h = int(alpha * n)
    if h == 0 or m == 0:
        return Fraction(0) if m else Fraction(1)
    law = law or poisson_limit()
    s, t = n, n + h
    if law.kind is Kind.POISSON_LIMIT:
        return _increment_lce(s, t, x, m, _law_key(law))
    return _increment_via_joint(s, t, x, m, _law_key(law))


def increment_moment_joint_route(n: int, alpha: float, x: int, m: int,
                                 law: OffspringLaw | None = None) -> Fraction:
    """The same increment moment through the joint-moment route (cross-check)."""
    law = law or poisson_limit()
    h = int(alpha * n)
    if h == 0 or m == 0:
        return Fraction(0) if m else Fraction(1)
    return _increment_via_joint(n, n + h, x, m, _law_key(law))


# -- Monte Carlo estimators ------------------------------------------------------

def _simulate_counts(n_max: int, x_window: int, law: OffspringLaw, reps: int,
                     rng: np.random.Generator, chunk: int = 100_000):
    """Yield [chunk, 2*x_window+1, n_max] occupation counts from one ancestor at 0."""
    W = 2 * (x_window + max(0, n_max - x_window)) + 1  # full reachable range
    mid = W // 2
    lo = mid - x_window
    for start in range(0, reps, chunk):
        nb = min(chunk, reps - start)
        Y = np.zeros((nb, W), dtype=np.int64)
        Y[:, mid] = 1
        out = np.zeros((nb, 2 * x_window + 1, n_max), dtype=np.int64)
        for gen in range(1, n_max + 1):
            P = np.zeros((nb, W + 2), dtype=np.int64)
            P[:, 1:-1] = Y
            M = P[:, :-2] + P[:, 1:-1] + P[:, 2:]
            if law.kind is Kind.POISSON_LIMIT:
                Y = rng.poisson(M / 3.0)
            else:
                Y = rng.binomial(M * law.N, 1.0 / (3 * law.N))
            out[:, :, gen - 1] = Y[:, lo:lo + 2 * x_window + 1]
        yield out


def mc_moment_table(n_max: int, x_max: int, m_max: int, law: OffspringLaw,
                    reps: int, seed: int) -> dict[tuple[int, int, int], tuple[float, float]]:
    """{(n, x, m): (estimate, standard error)} from one shared batch of runs."""
    rng = keyed_generator(seed, "mc-moment")
    s1 = np.zeros((2 * x_max + 1, n_max, m_max))
    s2 = np.zeros_like(s1)
    for block in _simulate_counts(n_max, x_max, law, reps, rng):
        Yf = block.astype(np.float64)
        pw = Yf.copy()
        for m in range(1, m_max + 1):
            s1[:, :, m - 1] += pw.sum(axis=0)
            s2[:, :, m - 1] += (pw * pw).sum(axis=0)
            if m < m_max:
                pw *= Yf
    table = {}
    for xi in range(2 * x_max + 1):
        for n in range(1, n_max + 1):
            for m in range(1, m_max + 1):
                mean = s1[xi, n - 1, m - 1] / reps
                var = max(s2[xi, n - 1, m - 1] / reps - mean**2, 0.0)
                table[(n, xi - x_max, m)] = (mean, math.sqrt(var / reps))
    return table


def mc_moment(n: int, x: int, m: int, law: OffspringLaw, reps: int,
              seed: int = 0) -> tuple[float, float]:
    """Direct-simulation estimate of E[Y_n(x)^m] with its standard error."""
    table = mc_moment_table(n, abs(x), m, law, reps, seed)
    return table[(n, x, m)]


def mc_increment_moment(n: int, alpha: float, x: int, m: int, law: OffspringLaw,
                        reps: int, seed: int = 0) -> tuple[float, float]:
    """MC estimate of E[(Y_n(x) - Y_{n+[alpha n]}(x))^m] with standard error."""
    h = int(alpha * n)
    t = n + h
    rng = keyed_generator(seed, "mc-increment")
    s1 = 0.0
    s2 = 0.0
    for block in _simulate_counts(t, abs(x), law, reps, rng):
        ys = block[:, abs(x) + x, n - 1].astype(np.float64)
        yt = block[:, abs(x) + x, t - 1].astype(np.float64)
        d = (ys - yt) ** m
        s1 += d.sum()
        s2 += (d * d).sum()
    mean = s1 / reps
    var = max(s2 / reps - mean**2, 0.0)
    return mean, math.sqrt(var / reps)
