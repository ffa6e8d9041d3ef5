"""Named, counter-based random streams.

Every random quantity in a simulation is drawn from its own stream keyed by
``(seed, *key)``, so trajectories do not depend on the order in which other
streams are consumed and independent runs can execute in parallel.
"""

import numpy as np

# stream purposes
THETA_NOISE = 0
GAMMA_NOISE = 1
DELAYS = 2
SHUFFLE = 3
INIT = 4

# seed offset separating training databases from test datasets
TRAIN_SEED_OFFSET = 1_000_003


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))
