"""Seedable splitmix64 generator.

Dataset generation, weight init and shuffling all draw from this one
documented 64-bit generator so that identical seeds give byte-identical
artifacts on any platform (no dependence on library RNG streams).
"""

from __future__ import annotations

import math

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_DOUBLE_SCALE = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based splitmix64; k vectorized draws equal k scalar draws."""

    def __init__(self, seed: int) -> None:
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._count = 0

    def next_u64(self, n: int | None = None):
        if n is None:
            out = self.u64_array(1)
            return int(out[0])
        return self.u64_array(n)

    def u64_array(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            return _mix(self._seed + idx * _GAMMA)

    def uniform(self, lo: float, hi: float, n: int | None = None):
        u = (self.u64_array(1 if n is None else n) >> np.uint64(11)).astype(
            np.float64
        ) * _DOUBLE_SCALE
        v = lo + u * (hi - lo)
        return float(v[0]) if n is None else v

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """Box-Muller; draws 2*ceil(n/2) uniforms."""
        m = (n + 1) // 2
        u1 = (self.u64_array(m) >> np.uint64(11)).astype(np.float64)
        u2 = (self.u64_array(m) >> np.uint64(11)).astype(np.float64)
        u1 = (u1 + 1.0) * _DOUBLE_SCALE  # (0, 1], keeps log finite
        u2 = u2 * _DOUBLE_SCALE
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(2.0 * math.pi * u2)
        out[1::2] = r * np.sin(2.0 * math.pi * u2)
        return sigma * out[:n]

    def randint(self, n: int) -> int:
        """Integer in [0, n); modulo reduction (bias < 2**-53 for desk-scale n)."""
        return int(self.next_u64() % n)

    def shuffle(self, count: int) -> np.ndarray:
        """Deterministic Fisher-Yates permutation of range(count)."""
        perm = np.arange(count)
        for i in range(count - 1, 0, -1):
            j = int(self.next_u64() % (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def derive_seed(seed: int, index: int) -> int:
    """Per-item seed: seed XOR index.

    Two collections with seed bases closer than their index range share
    per-item streams (and therefore samples); keep independent collections'
    seed bases XOR-disjoint over the index range, e.g. multiples of 2**20.
    """
    return (seed ^ index) & 0xFFFFFFFFFFFFFFFF
