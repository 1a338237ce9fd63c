"""xorshift64* generator: the single source of randomness in the package.

Every stochastic step (weight init, shuffles, dropout masks) draws from an
instance of :class:`Prng`, so a run is bit-reproducible from its seed.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
MULTIPLIER = 0x2545F4914F6CDD1D
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_TWO_POW_53 = float(1 << 53)


class Prng:
    """Mutable xorshift64* state. A zero seed is rejected."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 < seed <= MASK64:
            raise ValueError(f"seed must be a nonzero unsigned 64-bit integer, got {seed}")
        self.state = seed

    def __repr__(self):
        return f"Prng(state={self.state:#018x})"

    def copy(self) -> Prng:
        return Prng(self.state)

    def next_u64(self) -> int:
        s = self.state
        s ^= s >> 12
        s ^= (s << 25) & MASK64
        s ^= s >> 27
        self.state = s
        return (s * MULTIPLIER) & MASK64

    def next_float(self) -> float:
        """Uniform on [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) / _TWO_POW_53

    def u64_array(self, n: int) -> np.ndarray:
        s = self.state
        out = [0] * n
        for i in range(n):
            s ^= s >> 12
            s ^= (s << 25) & MASK64
            s ^= s >> 27
            out[i] = (s * MULTIPLIER) & MASK64
        self.state = s
        return np.array(out, dtype=np.uint64)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` consecutive :meth:`next_float` draws as a float64 array."""
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) / _TWO_POW_53

    def below(self, bound: int) -> int:
        """Integer in ``[0, bound)`` as ``next_u64() % bound``."""
        return self.next_u64() % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates: for i = n-1 down to 1 swap i with ``below(i + 1)``."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def normal(self, n: int) -> np.ndarray:
        """Standard normals by Box-Muller over consecutive uniform pairs.

        Pair ``(u1, u2)`` yields ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)`` with
        ``r = sqrt(-2 ln(1 - u1))``; an odd count discards the final sine.
        """
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * math.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.reshape(-1)[:n]


def epoch_seed(seed: int, epoch: int) -> int:
    """Seed of the per-epoch batch shuffle: ``seed XOR (epoch + 1) * golden-gamma``."""
    return (int(seed) ^ ((epoch + 1) * GOLDEN_GAMMA)) & MASK64
