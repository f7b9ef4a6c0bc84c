"""Deterministic RNG streams.

One counter-based (Philox) stream per task index, split off a master seed
via SeedSequence spawn keys: stream(seed, i) is reproducible regardless of
how many other streams exist or in which order they are drawn from.
"""

import numpy as np


def stream(master_seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for task `index` under `master_seed`."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def streams(master_seed: int, n: int) -> list[np.random.Generator]:
    return [stream(master_seed, i) for i in range(n)]
