"""Seeded random-stream management.

Every source of randomness in a run draws from its own generator, derived
from the user seed and a fixed purpose tag. Keeping the streams separate
means that enabling one randomized component (say, input noise) never
shifts the draws seen by another (say, batch shuffling), which is what
makes weakest-setting runs reproduce the baseline trajectory exactly.
"""

import numpy as np

# Purpose tags. Values are part of the reproducibility contract: changing
# them changes every derived stream.
INIT = 0
SHUFFLE = 1
DROPOUT = 2
NOISE = 3
CROP = 4
DP_NOISE = 5
TEACHER = 6
ATTACK = 7
EVAL_SET = 8
SYNTH = 9
SUBSET = 10
DTC = 11


def spawn(seed: int, purpose: int) -> np.random.Generator:
    """Return an independent generator for (seed, purpose)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(purpose)])))


def derive_seed(seed: int, purpose: int) -> int:
    """Derive a child seed (e.g. for a teacher sub-run) from a parent seed."""
    return int(np.random.SeedSequence([int(seed), int(purpose)]).generate_state(1)[0])
