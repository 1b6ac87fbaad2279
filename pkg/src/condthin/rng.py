"""Counter-based random streams.

Every random draw in a simulation comes from a stream addressed by
``(seed, trial_index, role, attempt)``. The stream is a Philox generator whose
128-bit key is ``(seed, role << 32 | attempt)`` and whose counter starts at
``(0, trial_index, 0, 0)``. Streams are therefore disjoint and can be created
in any order, on any worker, without coordination.
"""

from enum import IntEnum

import numpy as np

_MASK64 = (1 << 64) - 1


class StreamRole(IntEnum):
    PATTERN = 1
    THINNING = 2
    FADING = 3
    UE_PLACEMENT = 4


def stream(seed: int, trial_index: int, role: StreamRole, attempt: int = 0) -> np.random.Generator:
    """Return the generator for one (trial, role, attempt) triple."""
    if trial_index < 0 or attempt < 0:
        raise ValueError("trial_index and attempt must be non-negative")
    if attempt >= 1 << 32:
        raise ValueError("attempt counter overflow")
    key = [int(seed) & _MASK64, (int(role) << 32) | int(attempt)]
    counter = [0, int(trial_index) & _MASK64, 0, 0]
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seed(seed: int, *labels: int) -> int:
    """Deterministically derive a 64-bit sub-experiment seed."""
    entropy = [int(seed) & _MASK64, *[int(x) for x in labels]]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])
