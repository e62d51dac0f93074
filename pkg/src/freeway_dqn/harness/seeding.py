"""Named random streams derived from one master seed.

Every stream is a Philox-4x64 counter-based generator keyed by
``numpy.random.SeedSequence(master, spawn_key=(stream, index...))``. The
stream ids below are part of the reproducibility contract: changing one
changes every output file.
"""

from __future__ import annotations

import numpy as np

SCENARIO = 0      # (SCENARIO, episode): training-episode spawns
AGENT_INIT = 1    # (AGENT_INIT,): network initialisation
AGENT = 2         # (AGENT,): exploration and minibatch sampling
EVAL = 3          # (EVAL, episode): evaluation-episode spawns
BASELINE = 4      # (BASELINE,): random-policy action draws

U64 = (1 << 64) - 1


def derive_seed(master: int, *key: int) -> int:
    """64-bit seed for the sub-stream ``key`` of ``master``."""
    ss = np.random.SeedSequence(int(master) & U64, spawn_key=tuple(int(k) for k in key))
    lo, hi = (int(x) for x in ss.generate_state(2, np.uint32))
    return (hi << 32) | lo


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & U64))


def stream(master: int, *key: int) -> np.random.Generator:
    return generator(derive_seed(master, *key))
