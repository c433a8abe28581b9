"""Deterministic random-number streams.

All randomness in the package flows through one named generator: NumPy's
PCG64, seeded through ``SeedSequence``. A single scenario seed is fanned
out into independent per-purpose streams via the spawn key, so user
placement, channel noise, whitening matrices and synthetic sources never
share or perturb each other's state. Monte-Carlo trials derive one child
stream per trial index.
"""

import numpy as np

# spawn-key purpose tags (stable across versions; do not renumber)
USERS = 0
NOISE = 1
WHITEN = 2
SOURCE = 3


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Return the PCG64 stream for (seed, purpose, index)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))
