"""Counter-based uniforms: a pure function of (seed, stream, path, step).

Each uniform is the SplitMix64 finaliser chained over the four keys, so any
subset of paths can be generated in any order or on any worker and still match.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(v) -> np.ndarray:
    if isinstance(v, int):
        v &= _MASK64
    return np.asarray(v, dtype=np.uint64)


def counter_uniforms(seed: int, stream: int, path, step) -> np.ndarray:
    """Uniforms in ``[0, 1)`` with 53 random bits; ``path`` and ``step`` broadcast."""
    with np.errstate(over="ignore"):
        z = _mix(_u64(seed))
        z = _mix(z ^ _u64(stream))
        z = _mix(z ^ _u64(path))
        z = _mix(z ^ _u64(step))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


# stream ids
ATOM_STREAM = 0
CONTROL_STREAM = 1
