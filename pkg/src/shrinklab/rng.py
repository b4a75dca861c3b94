"""Seeded random streams.

Every random draw goes through a Philox counter-based generator keyed by a
single 64-bit seed.  Independent tasks use the sub-seed ``base ^ task``.
"""

import numpy as np

from .errors import ConfigError

SEED_MAX = 2 ** 64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ConfigError("seed must fit in 64 bits")
    return seed


def make_rng(seed: int = 0, task: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(check_seed(seed) ^ int(task)))
