"""Direct simulation of the critical SIS-1 / SIR-1 village epidemics.

Villages of N exchangeable individuals sit on the integer lattice; each
(infected, susceptible) pair at distance <= 1 transmits with probability
p = 1/(3N), and infected individuals recover after one generation (SIS:
susceptible again; SIR: immune).  The hot path draws one Binomial per site
using the escape product 1-(1-p)^M, which is exactly the law of the per-pair
coins given M infectious neighbors; a labeled per-pair mode driven by keyed
coins is kept as the slow reference for pathwise equality with the
percolation construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import ParticleField
from .rng import KeyedStreams


@dataclass(frozen=True)
class EpidemicParams:
    N: int
    variant: str  # "sis" | "sir"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("village size must be positive")
        if self.variant not in ("sis", "sir"):
            raise ValueError("variant must be 'sis' or 'sir'")

    @property
    def p(self) -> float:
        """Critical per-pair infection probability 1/((2d+1)N), d=1."""
        return 1.0 / (3 * self.N)


class EpidemicState:
    """Per-site infected / recovered counts with village capacity N."""

    def __init__(self, N: int, infected: dict[int, int] | None = None,
                 recovered: dict[int, int] | None = None):
        self.N = N
        self.I: dict[int, int] = dict(infected or {})
        self.R: dict[int, int] = dict(recovered or {})
        self.validate()

    def validate(self):
        for x, c in self.I.items():
            if c < 0 or c + self.R.get(x, 0) > self.N:
                raise ValueError(f"site {x}: infected+recovered exceed capacity")
        for x, c in self.R.items():
            if c < 0 or c + self.I.get(x, 0) > self.N:
                raise ValueError(f"site {x}: infected+recovered exceed capacity")

    def susceptible(self, x: int) -> int:
        return self.N - self.I.get(x, 0) - self.R.get(x, 0)

    @property
    def infected_total(self) -> int:
        return sum(self.I.values())

    def infected_field(self) -> ParticleField:
        return ParticleField({x: c for x, c in self.I.items() if c})

    def copy(self) -> "EpidemicState":
        return EpidemicState(self.N, self.I, self.R)


def epidemic_step(state: EpidemicState, params: EpidemicParams,
                  rng: np.random.Generator) -> EpidemicState:
    """One generation: infections land, then every current infected recovers."""
    if state.N != params.N:
        raise ValueError("state/params village size mismatch")
    state.validate()
    p = params.p
    m: dict[int, int] = {}
    for x, c in state.I.items():
        if c:
            for dx in (-1, 0, 1):
                m[x + dx] = m.get(x + dx, 0) + c
    new_I: dict[int, int] = {}
    for y, my in m.items():
        s = state.susceptible(y)
        if my > 0 and s > 0:
            prob = -np.expm1(my * np.log1p(-p))
            k = int(rng.binomial(s, prob))
            if k:
                new_I[y] = k
    if params.variant == "sir":
        new_R = dict(state.R)
        for x, c in state.I.items():
            new_R[x] = new_R.get(x, 0) + c
    else:
        new_R = {}
    return EpidemicState(state.N, new_I, new_R)


@dataclass
class EpidemicRun:
    trajectory: list[EpidemicState]
    duration: int
    size: int          # SIR: total ever infected; SIS: sum over t of infected
    extent: int
    truncated: bool = False


def epidemic_run(init: EpidemicState, params: EpidemicParams,
                 rng: np.random.Generator, max_gens: int) -> EpidemicRun:
    if max_gens < 1:
        raise ValueError("max_gens must be >= 1")
    init.validate()
    traj = [init.copy()]
    cur = init
    size = cur.infected_total
    extent = max((abs(x) for x, c in cur.I.items() if c), default=0)
    duration = 0
    for t in range(1, max_gens + 1):
        if cur.infected_total == 0:
            return EpidemicRun(traj, duration, size, extent)
        cur = epidemic_step(cur, params, rng)
        traj.append(cur)
        if cur.infected_total:
            duration = t
            size += cur.infected_total
            extent = max(extent, max(abs(x) for x, c in cur.I.items() if c))
    return EpidemicRun(traj, duration, size, extent, truncated=cur.infected_total > 0)


# -- labeled per-pair reference mode ------------------------------------------

def epidemic_run_pairwise(
    initial_infected: set[tuple[int, int]],
    params: EpidemicParams,
    streams: KeyedStreams,
    max_gens: int,
) -> list[set[tuple[int, int]]]:
    """Labeled epidemic with one keyed coin per (pair[, generation]).

    Vertices are (site, individual in [N]).  SIR tosses each unordered pair's
    coin once ever; SIS re-tosses per generation.  The coin keys match the
    percolation builder exactly, so generation sets agree pathwise with BFS
    layers on the corresponding random graph.  Scope `streams` per replicate
    (e.g. KeyedStreams(stable_key(seed, "rep", r))) for independent runs.
    """
    n = params.N
    p = params.p
    sir = params.variant == "sir"
    generations = [set(initial_infected)]
    ever = set(initial_infected)
    current = set(initial_infected)
    for t in range(max_gens):
        if not current:
            break
        nxt: set[tuple[int, int]] = set()
        blocked = ever if sir else current
        for (x, i) in current:
            for y in (x - 1, x, x + 1):
                for j in range(n):
                    v = (y, j)
                    if v == (x, i) or v in blocked or v in nxt:
                        continue
                    if streams.pair_coin(p, (x, i), v, layer=None if sir else t):
                        nxt.add(v)
        generations.append(nxt)
        ever |= nxt
        current = nxt
    return generations
