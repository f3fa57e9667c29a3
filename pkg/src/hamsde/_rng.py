"""Seed-derived random substreams.

Every random draw in the package flows through substream(): a counter-based
Philox generator keyed by (seed, *path). Distinct paths give statistically
independent streams, and the same key reproduces bit-identical output, which
is what makes ensembles replayable and safe to split across workers.
"""

import numpy as np


def substream(seed, *path):
    key = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(key))
