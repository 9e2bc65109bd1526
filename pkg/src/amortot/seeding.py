"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
(seed, counter...), so results do not depend on call order or on how work
is split across threads.
"""

from __future__ import annotations

import numpy as np


def counter_rng(seed: int, *counters: int) -> np.random.Generator:
    """Independent generator for the stream (seed, *counters)."""
    entropy = [int(seed), *(int(c) for c in counters)]
    if any(value < 0 for value in entropy):
        raise ValueError(f"seed and counters must be non-negative, got {entropy}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
