"""Counter-based keyed random streams.

Every stochastic experiment is a pure function of (master seed, key tuple).
Keys are tuples of small ints / short strings identifying a replicate,
generation, site, particle lineage, or purpose; they are hashed into a
128-bit Philox key, so draws for one key never depend on draws for another.
This is what makes replicate-level parallelism, pathwise couplings, and
monotonicity tests possible: adding particles or reordering work cannot
perturb the stream any existing key maps to.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["stable_key", "keyed_generator", "KeyedStreams"]


def stable_key(*parts: int | str) -> int:
    """Hash a tag tuple to a 128-bit integer, stable across runs and platforms."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        if isinstance(part, str):
            b = part.encode()
            h.update(b"s" + struct.pack("<I", len(b)) + b)
        else:
            v = int(part)
            b = v.to_bytes(max(1, (v.bit_length() + 8) // 8), "little", signed=True)
            h.update(b"i" + struct.pack("<I", len(b)) + b)
    return int.from_bytes(h.digest(), "little")


def keyed_generator(*parts: int | str) -> np.random.Generator:
    """A fresh Generator whose Philox key is derived from the tag tuple."""
    key = stable_key(*parts)
    lo = key & 0xFFFFFFFFFFFFFFFF
    hi = key >> 64
    return np.random.Generator(np.random.Philox(key=np.array([lo, hi], dtype=np.uint64)))


class KeyedStreams:
    """Keyed access to independent streams under one master seed.

    `generator(*tag)` returns the stream for a tag; `uniform`/`coin` draw the
    first value of that stream (one-shot draws, used for pair coins shared
    between the per-pair epidemic reference mode and the percolation builder).
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, *tag: int | str) -> np.random.Generator:
        return keyed_generator(self.seed, *tag)

    def uniform(self, *tag: int | str) -> float:
        return float(self.generator(*tag).random())

    def coin(self, p: float, *tag: int | str) -> bool:
        return self.uniform(*tag) < p

    def pair_coin(self, p: float, v1: tuple[int, int], v2: tuple[int, int],
                  layer: int | None = None) -> bool:
        """Bernoulli(p) coin for an unordered vertex pair (site, individual).

        The same coin is seen no matter which endpoint asks, so a percolation
        graph and an epidemic built from the same streams agree pathwise.
        SIS uses one coin per generation (`layer`); SIR a single lifetime coin.
        """
        a, b = sorted((v1, v2))
        tag: tuple[int | str, ...] = ("pair", a[0], a[1], b[0], b[1])
        if layer is not None:
            tag = tag + ("layer", layer)
        return self.coin(p, *tag)
