"""Deterministic RNG stream derivation.

Every stochastic component pulls from a numpy Generator derived from
(master seed, integer key path) via SeedSequence spawn keys. Streams are
independent of evaluation order and of how work is batched, so datasets,
chains, and noise draws reproduce bitwise no matter the pool size.
"""

from __future__ import annotations

import numpy as np


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for stream ``key`` (a tuple of small ints) under a master seed."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
