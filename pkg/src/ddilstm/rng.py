"""Deterministic named random streams derived from one run seed.

Every source of randomness (parameter init, epoch shuffling, dropout,
train/heldout splitting) draws from its own stream so that changing one
consumer never perturbs the others.
"""

from __future__ import annotations

import zlib

import numpy as np


def named_stream(seed: int, name: str) -> np.random.Generator:
    """A generator for stream `name`, reproducible from (seed, name)."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
