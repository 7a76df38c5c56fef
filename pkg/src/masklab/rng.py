"""Seeded counter-based random streams.

All randomness in the library flows through Philox generators keyed by
(seed, *stream key). Philox is counter-based, so every work item gets an
independent stream that does not depend on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for a (seed, key...) stream.

    The same arguments always produce the same sequence; distinct keys
    produce statistically independent sequences.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
