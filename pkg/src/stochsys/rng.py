"""Counter-based random streams keyed by (seed, replicate, stream, step).

Each draw is a SplitMix64 output at a position computed from its key, so any
subset of replicates can be generated in any order, in one vectorised call, and
give bit-identical numbers. That makes ensemble results independent of how
replicates are split across workers.
"""
from __future__ import annotations

import zlib

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def replicate_keys(seed: int, replicates) -> np.ndarray:
    """Per-replicate 64-bit keys."""
    r = np.asarray(replicates, dtype=np.uint64)
    root = _mix(np.asarray([int(seed) & _MASK], dtype=np.uint64) ^ np.uint64(0x5DEECE66D))
    return _mix(root + (r + np.uint64(1)) * _GOLDEN)


def stream_id(name: str, slot: str) -> np.uint64:
    """Stable id of a named stream (process name + draw slot)."""
    return np.uint64(zlib.crc32(f"{name}\x00{slot}".encode()) | (zlib.crc32(slot.encode()) << 32))


class Streams:
    """Uniform/normal draws for one set of replicates."""

    def __init__(self, seed: int, replicates):
        self.keys = replicate_keys(seed, replicates)

    def select(self, idx) -> "Streams":
        out = Streams.__new__(Streams)
        out.keys = self.keys[idx]
        return out

    def _bits(self, stream: np.uint64, steps: np.ndarray) -> np.ndarray:
        base = _mix(self.keys ^ stream)
        ctr = (np.asarray(steps, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
        return _mix(base[None, :] + ctr[:, None])

    def uniform(self, stream: np.uint64, steps) -> np.ndarray:
        """Uniforms in (0, 1), shape ``(len(steps), n_replicates)``."""
        bits = self._bits(stream, steps)
        return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)

    def normal(self, stream: np.uint64, steps) -> np.ndarray:
        return ndtri(self.uniform(stream, steps))
