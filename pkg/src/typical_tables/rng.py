"""Seeded random streams.

Seed derivation rule: draw number ``k`` of a run seeded with ``seed`` uses
``numpy.random.SeedSequence(seed, spawn_key=(k,))``, which is the ``k``-th
child of ``SeedSequence(seed).spawn``. Any split of the draw indices across
workers therefore reproduces the single-worker output.
"""

from __future__ import annotations

import numpy as np


def child_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def randbelow(rng: np.random.Generator, bound: int) -> int:
    """Uniform integer in ``[0, bound)`` for arbitrarily large ``bound``."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    if bound < 2**63:
        return int(rng.integers(bound))
    bits = bound.bit_length()
    words = (bits + 31) // 32
    excess = words * 32 - bits
    while True:
        raw = rng.integers(0, 2**32, size=words, dtype=np.uint64)
        value = int.from_bytes(raw.astype("<u4").tobytes(), "little") >> excess
        if value < bound:
            return value
