"""Pinned pseudo-random generator for permutation sampling.

Permutations must be reproducible byte-for-byte across platforms, so the
generator is implemented here rather than borrowed from numpy, whose stream
guarantees are version-bound. The algorithm is xoshiro256** (Blackman and
Vigna), seeded through splitmix64 as its authors recommend.

Per-run seeds are derived from a master seed with :func:`derive_seed`::

    derive_seed(master, key) = mix(mix(master) XOR key)

where ``mix`` is one splitmix64 output step applied to its argument.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state, returning ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def mix64(x: int) -> int:
    return splitmix64(x & MASK64)[1]


def derive_seed(master: int, key: int) -> int:
    """Seed for an independent stream keyed by ``key`` (e.g. a run id)."""
    return mix64(mix64(master) ^ (key & MASK64))


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** generator.

    The state lives in a 4-element uint64 array so the compiled kernels can
    advance it in place; both code paths produce the same stream.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed > MASK64:
            raise ValueError(f"seed must be a u64, got {seed}")
        s = seed
        words = []
        for _ in range(4):
            s, out = splitmix64(s)
            words.append(out)
        self.state = np.array(words, dtype=np.uint64)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = (int(w) for w in self.state)
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.state[:] = (s0, s1, s2, s3)
        return result

    def bounded(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by top-bit rejection (no modulo)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        if n == 1:
            return 0
        shift = 64 - (n - 1).bit_length()
        while True:
            r = self.next_u64() >> shift
            if r < n:
                return r

    def random(self) -> float:
        """Uniform double in ``[0, 1)`` with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def clone(self) -> "Xoshiro256":
        other = Xoshiro256.__new__(Xoshiro256)
        other.state = self.state.copy()
        return other
