"""Initial-condition builders: point, block, and rescaled continuous profiles."""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Callable

import numpy as np

from .fields import ParticleField, block_field, point_field

_POINT = re.compile(r"^point\(\s*(-?\d+)\s*,\s*(\d+)\s*\)$")
_BLOCK = re.compile(r"^block\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(\d+)\s*\)$")
_FILE = re.compile(r"^profile:(.+)$")


def scaled_profile_field(f: Callable[[float], float], lo: float, hi: float,
                         k: int) -> ParticleField:
    """Counts ceil(f(x / sqrt(k)) * sqrt(k)) at sites x in [lo, hi] * sqrt(k).

    The rescaled density then approaches f from above within k^{-1/2} in
    sup norm on the support.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("profile support must be bounded")
    rk = math.sqrt(k)
    counts = {}
    for s in range(math.ceil(lo * rk), math.floor(hi * rk) + 1):
        v = f(s / rk)
        if v < 0:
            raise ValueError("profile values must be nonnegative")
        c = math.ceil(v * rk)
        if c:
            counts[s] = c
    return ParticleField(counts)


def profile_from_file(path: str | Path) -> tuple[Callable[[float], float], float, float]:
    """Piecewise-linear profile from CSV rows "x,value"; zero outside the breakpoints."""
    xs, vs = [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sx, sv = line.split(",")
        xs.append(float(sx))
        vs.append(float(sv))
    if len(xs) < 2:
        raise ValueError("profile file needs at least two breakpoints")
    order = np.argsort(xs)
    xa = np.array(xs)[order]
    va = np.array(vs)[order]
    if (va < 0).any():
        raise ValueError("profile values must be nonnegative")

    def f(x: float) -> float:
        if x < xa[0] or x > xa[-1]:
            return 0.0
        return float(np.interp(x, xa, va))

    return f, float(xa[0]), float(xa[-1])


def init_profile(spec: str, k: int | None = None) -> ParticleField:
    """Build an initial field from a spec string.

    Forms: "point(x, count)", "block(x0, x1, per_site)", "profile:<csv path>"
    (the last needs the rescaling parameter k).
    """
    spec = spec.strip()
    m = _POINT.match(spec)
    if m:
        return point_field(int(m.group(1)), int(m.group(2)))
    m = _BLOCK.match(spec)
    if m:
        x0, x1, c = int(m.group(1)), int(m.group(2)), int(m.group(3))
        return block_field(x0, x1, c)
    m = _FILE.match(spec)
    if m:
        if k is None:
            raise ValueError("profile-file initial conditions need the scale k")
        f, lo, hi = profile_from_file(m.group(1))
        return scaled_profile_field(f, lo, hi, k)
    raise ValueError(f"unrecognized initial-condition spec: {spec!r}")


def spread_block(total: int, sites: int, center: int = 0) -> ParticleField:
    """`total` particles spread as evenly as possible over `sites` adjacent sites."""
    if sites < 1 or total < 0:
        raise ValueError("need sites >= 1 and total >= 0")
    base, extra = divmod(total, sites)
    lo = center - sites // 2
    counts = {}
    for i in range(sites):
        c = base + (1 if i < extra else 0)
        if c:
            counts[lo + i] = c
    return ParticleField(counts)
