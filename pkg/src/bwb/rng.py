"""Seeded random streams.

Every random quantity in the package is drawn from a stream addressed by a
master seed plus an integer key path, e.g. ``stream(seed, replicate)``.
Streams with different keys are statistically independent, and a given key
always yields the same draws no matter how work is split across workers.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
