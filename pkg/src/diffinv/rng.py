"""Counter-based random streams keyed by (seed, stream, path id, step).

Every draw is a pure function of its key, so a path's noise does not
depend on batching, ordering or worker count.  The mixer is the SplitMix64
finalizer; each (seed, stream, path) triple selects a SplitMix64 sequence
and the step index walks along it.
"""

from __future__ import annotations

import numpy as np

from ._kernels import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TO_UNIT = 2.0 ** -53

# stream identifiers
NORMALS = 0
BRIDGE = 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def path_keys(seed: int, path_ids, stream: int = NORMALS) -> np.ndarray:
    """Per-path SplitMix64 starting states for ``(seed, stream)``."""
    ids = np.asarray(path_ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
                    + _GOLDEN * np.uint64(stream + 1))
        return _mix(base ^ _mix(ids * _GOLDEN + np.uint64(0x632BE59BD9B4E019)))


def uniforms(keys: np.ndarray, step: int) -> np.ndarray:
    """Uniforms in ``(0, 1)`` for step ``step`` of each keyed stream."""
    with np.errstate(over="ignore"):
        z = _mix(keys + _GOLDEN * np.uint64(step + 1))
    return ((z >> _S11).astype(np.float64) + 0.5) * _TO_UNIT


def normals(keys: np.ndarray, step: int) -> np.ndarray:
    """Standard normals by inverting the normal CDF at :func:`uniforms`."""
    return ndtri(uniforms(keys, step))


class CounterStream:
    """Convenience wrapper: one stream of a given seed, indexed by draw number."""

    def __init__(self, seed: int, stream: int = NORMALS, path_id: int = 0):
        self._key = path_keys(seed, [path_id], stream)

    def uniform(self, n: int, start: int = 0) -> np.ndarray:
        steps = np.arange(start, start + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = _mix(self._key + _GOLDEN * (steps + np.uint64(1)))
        return ((z >> _S11).astype(np.float64) + 0.5) * _TO_UNIT

    def normal(self, n: int, start: int = 0) -> np.ndarray:
        return ndtri(self.uniform(n, start))
