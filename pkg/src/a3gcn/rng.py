"""Seeded random streams.

Every random draw in a trial comes from a Philox (counter-based) generator
keyed by ``(seed, purpose, index)``, so the draws a model sees do not depend
on the order in which other models are trained.
"""

from __future__ import annotations

import enum

import numpy as np

_MASK64 = (1 << 64) - 1


class Stream(enum.IntEnum):
    VIEW = 0
    MEMBER_INIT = 1
    MEMBER_DROPOUT = 2
    SUBSET = 3
    CONSENSUS_INIT = 4
    CONSENSUS_DROPOUT = 5
    SPLIT = 6
    NOISE = 7
    SBM = 8


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(master_seed: int, trial: int) -> int:
    """Seed for trial ``trial``: ``splitmix64(splitmix64(master_seed) ^ trial)``."""
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (trial & _MASK64))


def make_rng(seed: int, purpose: int = 0, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=seed & _MASK64, spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.Philox(seq))
