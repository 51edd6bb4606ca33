"""Branching random walk engine (the branching envelope).

Two execution modes share one law:

* the default aggregated mode exploits that sums of the per-offset laws
  stay in-family (a site with conditional mean m receives Poisson(m) or
  Binomial(3N*m_count, p) offspring), sampling one variate per site;
* a lineage-keyed reference mode draws per particle from streams keyed by
  the particle's ancestry, so enlarging the initial condition never changes
  the offspring of particles already present (pathwise monotone coupling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import EnvelopeTrajectory, ParticleField
from .offspring import Kind, OffspringLaw, sample_offspring
from .rng import stable_key, keyed_generator

DEFAULT_CAP_MULTIPLIER = 50  # cap ~ 50 * initial mass; extinction time is O_P(mass)


def conditional_means(field: ParticleField) -> dict[int, float]:
    """lambda(x) = (Y(x-1) + Y(x) + Y(x+1)) / 3 on the support hull."""
    lam: dict[int, float] = {}
    for x, c in field.counts.items():
        for dx in (-1, 0, 1):
            lam[x + dx] = lam.get(x + dx, 0.0) + c / 3.0
    return lam


def brw_step(field: ParticleField, law: OffspringLaw,
             rng: np.random.Generator) -> ParticleField:
    """Advance one generation: every particle reproduces to its three offsets."""
    if field.is_empty():
        return ParticleField()
    lo, hi = field.support
    width = hi - lo + 3
    src = np.zeros(width, dtype=np.int64)
    for x, c in field.counts.items():
        src[x - lo + 1] = c
    m = np.zeros(width, dtype=np.int64)  # number of source particles feeding each site
    m[1:] += src[:-1]
    m += src
    m[:-1] += src[1:]
    if law.kind is Kind.POISSON_LIMIT:
        new = rng.poisson(m / 3.0)
    else:
        new = rng.binomial(m * law.N, 1.0 / (3 * law.N))
    out = ParticleField()
    for i in np.nonzero(new)[0]:
        out[lo - 1 + int(i)] = int(new[i])
    return out


def brw_run(init: ParticleField, law: OffspringLaw, rng: np.random.Generator,
            max_gens: int) -> EnvelopeTrajectory:
    """Iterate brw_step until extinction or the generation cap, recording all fields."""
    if max_gens < 1:
        raise ValueError("max_gens must be >= 1")
    traj = EnvelopeTrajectory([init.copy()])
    cur = init
    for _ in range(max_gens):
        if cur.is_empty():
            return traj
        cur = brw_step(cur, law, rng)
        traj.fields.append(cur)
    traj.truncated = not cur.is_empty()
    return traj


@dataclass(frozen=True)
class EnvelopeStats:
    duration: int          # last generation carrying mass
    total_progeny: int     # sum of all generation masses, initial included
    extent: int            # max |x| ever occupied
    max_site_count: int    # max over (t, x) of the occupation count
    lower_bounds: bool     # True when the trajectory was truncated at the cap


def envelope_stats(traj: EnvelopeTrajectory) -> EnvelopeStats:
    duration = 0
    extent = 0
    max_count = 0
    total = 0
    for t, f in enumerate(traj.fields):
        total += f.total
        if f.total > 0:
            duration = t
            extent = max(extent, f.extent)
            max_count = max(max_count, max(f.counts.values()))
    return EnvelopeStats(duration, total, extent, max_count, traj.truncated)


# -- lineage-keyed reference mode --------------------------------------------

def _lineage_offspring(law: OffspringLaw, lineage: int) -> tuple[int, int, int]:
    return sample_offspring(law, keyed_generator(lineage))


def reference_brw_run(init: ParticleField, law: OffspringLaw, seed: int,
                      max_gens: int, replicate: int = 0) -> EnvelopeTrajectory:
    """Envelope run with per-particle keyed randomness.

    A particle is identified by its lineage: root particles by (site, index
    within the site), children by (parent lineage, offset, sibling index).
    The offspring of a given lineage depend on nothing else, which makes the
    coupling in initial mass monotone: adding particles can only add counts.
    """
    particles: list[tuple[int, int]] = []  # (site, lineage key)
    for x, c in init.items():
        for i in range(c):
            particles.append((x, stable_key(seed, "brw", replicate, "root", x, i)))
    traj = EnvelopeTrajectory([init.copy()])
    for _ in range(max_gens):
        if not particles:
            return traj
        nxt: list[tuple[int, int]] = []
        fld = ParticleField()
        for x, lineage in particles:
            counts = _lineage_offspring(law, lineage)
            for off, k in zip((-1, 0, 1), counts):
                for j in range(k):
                    nxt.append((x + off, stable_key(lineage, off, j)))
                if k:
                    fld[x + off] = fld[x + off] + k
        traj.fields.append(fld)
        particles = nxt
    traj.truncated = bool(particles)
    return traj
