"""Deterministic RNG streams.

Every random choice in the package draws from a generator keyed by the
user-facing seed plus small integer tags, so runs replay bit-exactly and
parallel execution can use the same streams as sequential execution.
"""

import numpy as np

# Stream tags. Values are arbitrary but frozen: changing them changes
# every seeded artifact.
FOLD_PLAN = 11
VAL_SPLIT = 12
WEIGHT_INIT = 13
EPOCH_SHUFFLE = 14
PRINTER_PROFILE = 21
PAGE_TEXT = 22
PAGE_PRINTER = 23
PAGE_CAMERA = 24


def stream(seed: int, *tags: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *tags)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(t) for t in tags]])


def derive(seed: int, *tags: int) -> int:
    """A child seed for the stream identified by (seed, *tags)."""
    return int(stream(seed, *tags).integers(0, 2**63))
