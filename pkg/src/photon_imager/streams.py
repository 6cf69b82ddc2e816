"""Counter-based uniform random numbers keyed by (seed, pixel, stream, counter).

Each draw is a pure function of its key, so results do not depend on how the
work is split across workers or on evaluation order. The mixer is the
SplitMix64 finalizer applied to a running combination of the key words.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# stream identifiers
COUNT = 1
LABEL = 2
SIGNAL_TIME = 3
BACKGROUND_TIME = 4
IMPUTE = 5
BLOCK = 6


def _mix(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def hash64(*words) -> np.ndarray:
    """Hash broadcastable integer arrays into uint64."""
    with np.errstate(over="ignore"):
        h = np.uint64(0x6A09E667F3BCC909)
        for w in words:
            w = np.asarray(w).astype(np.uint64)
            h = _mix(h + _GOLDEN + w)
        return h


def uniform(seed, pixel, stream, counter) -> np.ndarray:
    """Uniform doubles in ``(0, 1)`` from the key (seed, pixel, stream, counter)."""
    h = hash64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), pixel, stream, counter)
    # 53 high bits, offset by half an ulp so 0 and 1 are never produced
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)
