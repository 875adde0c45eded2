"""Seeded random number streams.

Every stochastic component takes an explicit generator so runs are
reproducible end to end.  Derived streams come from spawn keys, which
keeps parallel collection jobs independent of worker scheduling.
"""
from __future__ import annotations

import numpy as np


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for a named substream, e.g. spawn_rng(seed, sequence_index)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
