"""Deterministic RNG derivation.

Every random draw in the package comes from a generator derived here, keyed by
a base seed plus a tuple of integer tags.  Derivation is stateless, so a resumed
run and an uninterrupted run see identical streams.
"""

from __future__ import annotations

import numpy as np

# purpose tags for spawn keys; values are arbitrary but frozen
INIT_PARAMS = 1
SWARM_INIT = 2
TRAIN_FN = 3
ENTROPY_MC = 4
BATTERY = 5
PSO_COEFF = 6
THIN = 7
RESTART = 8


def rng_for(base_seed: int, *tags: int) -> np.random.Generator:
    """Generator uniquely determined by (base_seed, tags)."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(t) for t in tags))
    return np.random.Generator(np.random.PCG64(ss))
