"""Deterministic 64-bit seed derivation.

Every randomized component in the package draws from a numpy Generator
seeded through :func:`derive_seed`, so that a single master seed fixes
the whole stream tree regardless of scheduling or thread count. The
mixer is SplitMix64 (Steele, Lea & Flood 2014): documented constants,
reproducible from any language.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One SplitMix64 output step for the given 64-bit state."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, *tags: int) -> int:
    """Mix a master seed with integer tags into a new 64-bit seed.

    Each tag advances the state by one absorb-and-scramble round, so
    (master, rep, stage, ...) tuples map to well-separated streams.
    """
    state = master & _MASK
    for tag in tags:
        state = splitmix64(state ^ (tag & _MASK))
    return splitmix64(state)


def generator(master: int, *tags: int) -> np.random.Generator:
    """numpy Generator seeded from derive_seed(master, *tags)."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *tags)))
