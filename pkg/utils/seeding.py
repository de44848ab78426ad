"""Splittable seeding for order-independent random streams.

Every random draw in the pipeline comes from a numpy ``Generator`` backed by
the counter-based Philox bit generator, keyed by a root seed plus a tuple of
integers (stream id, epoch, patch index, ...). Two streams with different keys
are statistically independent, and a stream never depends on which other
streams were consumed before it.
"""

import numpy as np

MAX_SEED = 2 ** 64 - 1

# Stream ids for the trainer; patch rendering uses the bare patch index.
SHUFFLE_STREAM = 1
CORRUPT_STREAM = 2


def check_seed(seed: int) -> int:
    """Validate a 64-bit seed and return it as a Python int."""
    seed = int(seed)
    if seed < 0 or seed > MAX_SEED:
        raise ValueError(f"Seed must be in [0, 2**64), got {seed}")
    return seed


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))
