"""Standard and modified couplings of the epidemic inside its branching envelope.

Red particles are actual infections, blue ones suppressed infection attempts;
red+blue always evolves as the envelope.  In the standard coupling, offspring
of red parents at a site choose labels uniformly in [N]: a label chosen by
k > 1 particles keeps one red survivor (SIS), and a label already used at the
site in an earlier generation makes every chooser blue (SIR).  The modified
coupling replaces label draws by at most one blue per (site, generation),
with probability kappa(y) = y(y-1)/(2N) (SIS) or y*R/N (SIR) given y
red-parent offspring, R the site's cumulative red count so far.

Production of blue offspring by red parents is the attrition that separates
the epidemic from its envelope; the threshold checks read it per generation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import ParticleField
from .offspring import Kind, OffspringLaw, poisson_limit


class ColoredField:
    """Per-site red/blue counts (plus used-label sets in the SIR standard coupling)."""

    def __init__(self, red: dict[int, int] | None = None,
                 blue: dict[int, int] | None = None):
        self.red: dict[int, int] = {x: c for x, c in (red or {}).items() if c}
        self.blue: dict[int, int] = {x: c for x, c in (blue or {}).items() if c}
        for d in (self.red, self.blue):
            if any(c < 0 for c in d.values()):
                raise ValueError("negative count")

    @property
    def red_total(self) -> int:
        return sum(self.red.values())

    @property
    def blue_total(self) -> int:
        return sum(self.blue.values())

    def red_field(self) -> ParticleField:
        return ParticleField(dict(self.red))

    def envelope_field(self) -> ParticleField:
        out = dict(self.red)
        for x, c in self.blue.items():
            out[x] = out.get(x, 0) + c
        return ParticleField(out)

    def is_empty(self) -> bool:
        return not self.red and not self.blue

    def copy(self) -> "ColoredField":
        return ColoredField(dict(self.red), dict(self.blue))


@dataclass
class AttritionSeries:
    """Per-generation counts of blue offspring born to red parents."""

    per_generation: list[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.per_generation)

    def mean_per_generation(self) -> float:
        return self.total / len(self.per_generation) if self.per_generation else 0.0


def _offspring_counts(parents: dict[int, int], law: OffspringLaw,
                      rng: np.random.Generator) -> dict[int, int]:
    """Aggregated offspring of one color class, site -> count."""
    if not parents:
        return {}
    m: dict[int, int] = {}
    for x, c in parents.items():
        for dx in (-1, 0, 1):
            m[x + dx] = m.get(x + dx, 0) + c
    out: dict[int, int] = {}
    for y, my in m.items():
        if law.kind is Kind.POISSON_LIMIT:
            k = int(rng.poisson(my / 3.0))
        else:
            k = int(rng.binomial(my * law.N, 1.0 / (3 * law.N)))
        if k:
            out[y] = k
    return out


def sample_labels_sis(y: int, N: int, rng: np.random.Generator) -> tuple[int, int]:
    """(red, blue) split of y red-parent offspring under SIS label collisions."""
    if y == 0:
        return 0, 0
    labels = rng.integers(0, N, y)
    distinct = len(set(labels.tolist()))
    return distinct, y - distinct


def sample_labels_sir(y: int, N: int, used: set[int],
                      rng: np.random.Generator) -> tuple[int, int, set[int]]:
    """(red, blue, freshly used labels): prior use dominates, then collisions."""
    if y == 0:
        return 0, 0, set()
    labels = rng.integers(0, N, y).tolist()
    fresh = [j for j in labels if j not in used]
    fresh_distinct = set(fresh)
    red = len(fresh_distinct)
    return red, y - red, fresh_distinct


def collision_probability(y: int, N: int) -> float:
    """Exact P(at least one blue among y red-parent offspring), SIS.

    Complement of all-distinct labels: 1 - N(N-1)...(N-y+1)/N^y.
    """
    if y <= 1:
        return 0.0
    q = 1.0
    for i in range(y):
        q *= (N - i) / N
    return 1.0 - q


def kappa_sis(y: int, N: int) -> float:
    return y * (y - 1) / (2.0 * N)


def kappa_sir(y: int, R: int, N: int) -> float:
    return y * R / float(N)


@dataclass
class StepOutcome:
    field: ColoredField
    blue_from_red: int
    clamped: int = 0


def standard_step(fld: ColoredField, N: int, variant: str, rng: np.random.Generator,
                  law: OffspringLaw | None = None,
                  used_labels: dict[int, set[int]] | None = None) -> StepOutcome:
    """One generation of the standard coupling.

    Mutates `used_labels` (SIR only) by the labels that became red.
    """
    if variant not in ("sis", "sir"):
        raise ValueError("variant must be 'sis' or 'sir'")
    law = law or poisson_limit()
    red_off = _offspring_counts(fld.red, law, rng)
    blue_off = _offspring_counts(fld.blue, law, rng)
    new_red: dict[int, int] = {}
    new_blue = dict(blue_off)
    attr = 0
    for y_site, k in red_off.items():
        if variant == "sis":
            r, b = sample_labels_sis(k, N, rng)
        else:
            used = used_labels.setdefault(y_site, set()) if used_labels is not None else set()
            r, b, fresh = sample_labels_sir(k, N, used, rng)
            used |= fresh
        if r:
            new_red[y_site] = r
        if b:
            new_blue[y_site] = new_blue.get(y_site, 0) + b
            attr += b
    return StepOutcome(ColoredField(new_red, new_blue), attr)


def modified_step(fld: ColoredField, N: int, variant: str,
                  recovered: dict[int, int] | None,
                  rng: np.random.Generator,
                  law: OffspringLaw | None = None) -> StepOutcome:
    """One generation of the modified coupling: at most one blue per site.

    `recovered` maps site -> cumulative prior red count (SIR); kappa above 1 is
    clamped to 1 and counted (desk-scale runs can leave the asymptotic regime).
    """
    if variant not in ("sis", "sir"):
        raise ValueError("variant must be 'sis' or 'sir'")
    if variant == "sir" and recovered is None:
        raise ValueError("SIR modified coupling needs the recovered counts")
    law = law or poisson_limit()
    red_off = _offspring_counts(fld.red, law, rng)
    blue_off = _offspring_counts(fld.blue, law, rng)
    new_red: dict[int, int] = {}
    new_blue = dict(blue_off)
    attr = 0
    clamped = 0
    for x, y in red_off.items():
        if variant == "sis":
            kap = kappa_sis(y, N)
        else:
            kap = kappa_sir(y, recovered.get(x, 0), N)
        if kap > 1.0:
            kap = 1.0
            clamped += 1
        r = y
        if y > 0 and rng.random() < kap:
            r -= 1
            new_blue[x] = new_blue.get(x, 0) + 1
            attr += 1
        if r:
            new_red[x] = r
    return StepOutcome(ColoredField(new_red, new_blue), attr, clamped)


@dataclass
class CouplingRun:
    trajectory: list[ColoredField]
    attrition: AttritionSeries
    clamp_events: int = 0
    truncated: bool = False

    @property
    def red_total_size(self) -> int:
        return sum(f.red_total for f in self.trajectory)

    @property
    def envelope_total_size(self) -> int:
        return sum(f.red_total + f.blue_total for f in self.trajectory)

    @property
    def red_duration(self) -> int:
        d = 0
        for t, f in enumerate(self.trajectory):
            if f.red_total:
                d = t
        return d


def run_standard_coupling(init_red: ParticleField, N: int, variant: str,
                          rng: np.random.Generator, max_gens: int,
                          law: OffspringLaw | None = None) -> CouplingRun:
    fld = ColoredField(dict(init_red.counts))
    traj = [fld.copy()]
    attr = AttritionSeries()
    used: dict[int, set[int]] = {} if variant == "sir" else None
    for _ in range(max_gens):
        if fld.is_empty():
            return CouplingRun(traj, attr)
        out = standard_step(fld, N, variant, rng, law, used)
        fld = out.field
        traj.append(fld.copy())
        attr.per_generation.append(out.blue_from_red)
    return CouplingRun(traj, attr, truncated=not fld.is_empty())


def run_modified_coupling(init_red: ParticleField, N: int, variant: str,
                          rng: np.random.Generator, max_gens: int,
                          law: OffspringLaw | None = None) -> CouplingRun:
    fld = ColoredField(dict(init_red.counts))
    traj = [fld.copy()]
    attr = AttritionSeries()
    recovered: dict[int, int] = {}
    clamps = 0
    for _ in range(max_gens):
        if fld.is_empty():
            return CouplingRun(traj, attr, clamps)
        # R_t counts red in all generations before the offspring's, parents included
        for x, c in fld.red.items():
            recovered[x] = recovered.get(x, 0) + c
        out = modified_step(fld, N, variant, recovered, rng, law)
        clamps += out.clamped
        fld = out.field
        traj.append(fld.copy())
        attr.per_generation.append(out.blue_from_red)
    return CouplingRun(traj, attr, clamps, truncated=not fld.is_empty())


def attrition_series(run: CouplingRun) -> AttritionSeries:
    return run.attrition
