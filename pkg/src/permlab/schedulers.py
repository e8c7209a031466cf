"""Per-epoch permutation schedules: IGD, Single Shuffle, Random Reshuffle, FlipFlop.

FlipFlop wraps a base rule: on every even epoch it replays the previous
epoch's permutation reversed. With Random Reshuffle the base rule still draws
a fresh permutation on even epochs (the draw is discarded), so the random
stream advances once per epoch regardless of FlipFlop.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ._backend import kernels
from .problems import ContractError
from .rng import Xoshiro256

BASES = ("igd", "single_shuffle", "random_reshuffle")
_ALIASES = {"igd": "igd", "ss": "single_shuffle", "rr": "random_reshuffle",
            "single_shuffle": "single_shuffle", "random_reshuffle": "random_reshuffle"}
_SHORT = {"igd": "igd", "single_shuffle": "ss", "random_reshuffle": "rr"}


class Permutation:
    """A bijection on ``{0..n-1}``; reported 1-based via :meth:`one_based`."""

    __slots__ = ("order",)

    def __init__(self, order: Iterable[int]):
        arr = np.array(list(order) if not isinstance(order, np.ndarray) else order, dtype=np.int64)
        n = len(arr)
        seen = np.zeros(n, dtype=bool)
        if n == 0 or arr.min() < 0 or arr.max() >= n:
            raise ContractError(f"not a permutation of 0..{n - 1}")
        seen[arr] = True
        if not seen.all():
            raise ContractError("permutation has repeated entries")
        arr.setflags(write=False)
        self.order = arr

    @classmethod
    def from_one_based(cls, order: Iterable[int]) -> "Permutation":
        return cls(np.asarray(list(order), dtype=np.int64) - 1)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @property
    def n(self) -> int:
        return len(self.order)

    def one_based(self) -> list[int]:
        return (self.order + 1).tolist()

    def reverse(self) -> "Permutation":
        return Permutation(self.order[::-1].copy())

    def __len__(self) -> int:
        return len(self.order)

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.order, other.order)

    def __hash__(self) -> int:
        return hash(self.order.tobytes())

    def __repr__(self) -> str:
        return f"Permutation({self.one_based()})"


def shuffle(rng: Xoshiro256, n: int) -> Permutation:
    """Uniform permutation by Fisher-Yates, advancing ``rng``."""
    if n < 1:
        raise ContractError("n must be >= 1")
    arr = np.arange(n, dtype=np.int64)
    kernels.shuffle_inplace(rng.state, arr)
    return Permutation(arr)


def canonical_base(name: str) -> str:
    try:
        return _ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; expected igd, ss or rr") from None


def strategy_label(base: str, flipflop: bool) -> str:
    short = _SHORT[canonical_base(base)]
    return f"ff-{short}" if flipflop else short


class PermutationStrategy:
    """Stateful scheduler; the sequence is a pure function of (base, flipflop, seed, n)."""

    def __init__(self, base: str, n: int, seed: int = 0, flipflop: bool = False):
        self.base = canonical_base(base)
        self.n = n
        self.seed = seed
        self.flipflop = flipflop
        self.rng = Xoshiro256(seed)
        self._k = 0
        self._fixed: Permutation | None = None
        self._prev: Permutation | None = None

    @property
    def label(self) -> str:
        return strategy_label(self.base, self.flipflop)

    def next_permutation(self, k: int) -> Permutation:
        if k != self._k + 1:
            raise ContractError(f"epochs must be queried in order; expected {self._k + 1}, got {k}")
        self._k = k
        if self.base == "igd":
            perm = Permutation.identity(self.n)
        elif self.base == "single_shuffle":
            if self._fixed is None:
                self._fixed = shuffle(self.rng, self.n)
            perm = self._fixed
        else:
            perm = shuffle(self.rng, self.n)
        if self.flipflop and k % 2 == 0:
            perm = self._prev.reverse()
        self._prev = perm
        return perm

    def sequence(self, K: int) -> list[Permutation]:
        """Convenience: the next K permutations starting from the current epoch."""
        start = self._k
        return [self.next_permutation(start + j + 1) for j in range(K)]


def next_permutation(s: PermutationStrategy, k: int, n: int | None = None) -> Permutation:
    if n is not None and n != s.n:
        raise ContractError(f"strategy built for n={s.n}, asked for n={n}")
    return s.next_permutation(k)


def make_strategy(spec: str, n: int, seed: int = 0) -> PermutationStrategy:
    """Build from a label such as ``"rr"``, ``"ff-ss"`` or ``"igd"``."""
    ff = spec.startswith("ff-")
    return PermutationStrategy(spec[3:] if ff else spec, n, seed, flipflop=ff)
