"""Sparse lattice occupation fields and recorded trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field


class ParticleField:
    """Nonnegative integer counts over lattice sites, sparse, with cached totals."""

    __slots__ = ("counts", "_total", "_support")

    def __init__(self, counts: dict[int, int] | None = None):
        self.counts: dict[int, int] = {}
        self._total = 0
        self._support: tuple[int, int] | None = None
        if counts:
            for x, c in counts.items():
                self[x] = c

    def __getitem__(self, x: int) -> int:
        return self.counts.get(x, 0)

    def __setitem__(self, x: int, c: int):
        if c < 0:
            raise ValueError(f"negative count {c} at site {x}")
        old = self.counts.get(x, 0)
        if c == 0:
            if old:
                del self.counts[x]
        else:
            self.counts[x] = int(c)
        self._total += int(c) - old
        self._support = None  # recompute lazily

    @property
    def total(self) -> int:
        return self._total

    @property
    def support(self) -> tuple[int, int] | None:
        """(min site, max site) with positive count, or None when empty."""
        if self._support is None and self.counts:
            self._support = (min(self.counts), max(self.counts))
        return self._support if self.counts else None

    @property
    def extent(self) -> int:
        """max |x| over occupied sites (0 for the empty field)."""
        s = self.support
        return 0 if s is None else max(abs(s[0]), abs(s[1]))

    def is_empty(self) -> bool:
        return not self.counts

    def items(self):
        return sorted(self.counts.items())

    def copy(self) -> "ParticleField":
        return ParticleField(dict(self.counts))

    def __eq__(self, other) -> bool:
        return isinstance(other, ParticleField) and self.counts == other.counts

    def __repr__(self) -> str:
        return f"ParticleField({dict(self.items())})"


def point_field(x: int, count: int) -> ParticleField:
    return ParticleField({x: count})


def block_field(x0: int, x1: int, per_site: int) -> ParticleField:
    if x1 < x0:
        raise ValueError("block needs x0 <= x1")
    return ParticleField({x: per_site for x in range(x0, x1 + 1)} if per_site else {})


@dataclass
class EnvelopeTrajectory:
    """One field per generation, ending at extinction or at the generation cap."""

    fields: list[ParticleField] = field(default_factory=list)
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, t: int) -> ParticleField:
        return self.fields[t]

    @property
    def masses(self) -> list[int]:
        return [f.total for f in self.fields]
