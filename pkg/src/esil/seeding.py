"""Deterministic random-stream derivation.

Every consumer of randomness gets its own generator, keyed by the master
seed plus a stream tag and position (epoch, worker, episode...). Keys,
not call order, determine every stream, so reorganizing the code or the
thread schedule cannot change a run.
"""

from __future__ import annotations

import numpy as np

STREAM_INIT = 0
STREAM_COLLECT = 1
STREAM_EVAL = 2
STREAM_SHUFFLE = 3
STREAM_SIL = 4


def rng_for(master_seed: int, stream: int, *key: int) -> np.random.Generator:
    entropy = (int(master_seed), int(stream), *[int(k) for k in key])
    return np.random.default_rng(np.random.SeedSequence(entropy))
