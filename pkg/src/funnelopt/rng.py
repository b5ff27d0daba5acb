"""Seedable, splittable random streams.

Every consumer gets its own substream keyed by a fixed purpose code, so
adding a new consumer never perturbs an existing stream and any batch can
be regenerated from (seed, step) alone. PCG64 seeded through SeedSequence
is platform-independent, which the byte-identical trace contract relies on.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose codes; append only, never renumber.
BATCH = 1
TRANSFORM = 2
SPLIT = 3
SYNTH = 4
INIT = 5

__all__ = ["BATCH", "TRANSFORM", "SPLIT", "SYNTH", "INIT", "substream"]


def substream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    """Generator for one (seed, purpose, *extra) key, e.g. a step index."""
    entropy = [int(seed), int(purpose), *[int(e) for e in extra]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
