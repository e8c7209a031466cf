"""Constructive and exhaustive search over permutation sequences.

Sequences are enumerated in lexicographic order (epoch 1 most significant,
permutations within an epoch in lexicographic order), so every argmin or
argmax tie resolves to the lexicographically smallest sequence. For
quadratics, one affine map per permutation is built once and reused at every
epoch, and all sequences are advanced together as a batch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np

from .analysis import DecayClassification, classify_decay
from .engine import MAX_MAP_DIM, epoch_affine_map, run_sequence
from .problems import ContractError, FiniteSum, QuadraticSum
from .schedulers import Permutation

OBJECTIVES = ("min_final_error", "max_final_error")


class BudgetExceeded(RuntimeError):
    """Enumeration refused; ``estimate`` is the sequence count that was requested."""

    def __init__(self, estimate: int, message: str):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class SequenceSearchBudget:
    max_n: int = 8
    max_K: int = 16
    max_sequences: int = 1 << 22
    objective: str = "min_final_error"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.max_n > 8:
            raise ValueError("max_n cannot exceed 8")

    def check(self, n: int, K: int) -> int:
        est = math.factorial(n) ** K
        if n > self.max_n:
            raise BudgetExceeded(est, f"n={n} exceeds max_n={self.max_n}")
        if K > self.max_K:
            raise BudgetExceeded(est, f"K={K} exceeds max_K={self.max_K}")
        if est > self.max_sequences:
            raise BudgetExceeded(est, f"(n!)^K = {est} sequences exceeds the budget of {self.max_sequences}")
        return est


@dataclass
class SearchResult:
    mode: str
    objective: str
    best_sequence: list[Permutation]
    errors: np.ndarray
    final_x: np.ndarray
    value: float
    n_sequences: int
    classification: DecayClassification | None = None

    def sequence_one_based(self) -> list[list[int]]:
        return [p.one_based() for p in self.best_sequence]

    def as_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "objective": self.objective,
            "sequence": self.sequence_one_based(),
            "errors": self.errors.tolist(),
            "final_x": self.final_x.tolist(),
            "value": self.value,
            "n_sequences": self.n_sequences,
            "classification": None if self.classification is None else self.classification.as_dict(),
        }


@lru_cache(maxsize=16)
def _perm_table(n: int) -> tuple[Permutation, ...]:
    return tuple(Permutation(p) for p in itertools.permutations(range(n)))


def all_permutations(n: int) -> list[Permutation]:
    """All n! permutations in lexicographic order."""
    if n > 8:
        raise BudgetExceeded(math.factorial(n), f"n={n} > 8: refusing to enumerate n! orders")
    return list(_perm_table(n))


def _xstar(fs: FiniteSum, x_star) -> np.ndarray:
    return fs.minimizer if x_star is None else np.asarray(x_star, dtype=np.float64).reshape(fs.d)


def sorted_gradient_permutation(fs: FiniteSum, x_ref) -> Permutation:
    """Components ordered by ``grad f_i(x_ref)`` decreasing; ties keep index order."""
    if fs.d != 1:
        raise ContractError("sorted_gradient_permutation is defined for 1-D problems")
    x_ref = np.asarray(x_ref, dtype=np.float64).reshape(1)
    g = [float(fs.grad(i, x_ref)[0]) for i in range(fs.n)]
    return Permutation(sorted(range(fs.n), key=lambda i: -g[i]))


def _all_endpoints(fs: FiniteSum, x: np.ndarray, alpha: float) -> np.ndarray:
    perms = all_permutations(fs.n)
    out = np.empty((len(perms), fs.d))
    with np.errstate(over="ignore", invalid="ignore"):
        for j, p in enumerate(perms):
            out[j] = fs.epoch(x, p, alpha)
    return out


def greedy_best_permutation(fs: FiniteSum, x, alpha: float, x_star=None) -> tuple[Permutation, np.ndarray]:
    """The order whose epoch endpoint lands closest to the minimizer."""
    xs = _xstar(fs, x_star)
    x = np.asarray(x, dtype=np.float64).reshape(fs.d)
    ends = _all_endpoints(fs, x, alpha)
    dist = np.sum((ends - xs) ** 2, axis=1)
    dist[~np.isfinite(dist)] = np.inf
    j = int(np.argmin(dist))
    return all_permutations(fs.n)[j], ends[j].copy()


def greedy_sequence_run(fs: FiniteSum, x0, alpha: float, K: int, x_star=None,
                        window_start: int = 5) -> SearchResult:
    """Pick the greedy order every epoch and classify the decay on epochs window_start..K."""
    xs = _xstar(fs, x_star)
    x = np.asarray(x0, dtype=np.float64).reshape(fs.d)
    seq: list[Permutation] = []
    for _ in range(K):
        p, x = greedy_best_permutation(fs, x, alpha, xs)
        seq.append(p)
    traj = run_sequence(fs, seq, x0, alpha, xs)
    cls = None
    Ks = np.arange(1, len(traj.sq_errors) + 1)
    sel = Ks >= window_start
    if sel.sum() >= 4:
        cls = classify_decay(Ks[sel], traj.sq_errors[sel])
    return SearchResult("greedy", "min_final_error", seq, traj.sq_errors, traj.final_x,
                        float(traj.sq_errors[-1]) if len(traj.sq_errors) else math.nan, K * len(all_permutations(fs.n)), cls)


def enumerate_endpoints(fs: FiniteSum, x0, alpha: float, K: int,
                        budget: SequenceSearchBudget | None = None) -> np.ndarray:
    """Final iterates of all ``(n!)^K`` sequences, shape ``((n!)^K, d)``, in lexicographic order."""
    budget = budget or SequenceSearchBudget()
    budget.check(fs.n, K)
    if K < 1:
        raise ContractError("K must be >= 1")
    perms = all_permutations(fs.n)
    states = np.asarray(x0, dtype=np.float64).reshape(1, fs.d)
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(fs, QuadraticSum) and fs.d <= MAX_MAP_DIM:
            maps = [epoch_affine_map(fs, p, alpha) for p in perms]
            Ms = np.stack([m.M for m in maps])  # (P, d, d)
            vs = np.stack([m.v for m in maps])  # (P, d)
            for _ in range(K):
                # new[s, p] = M_p x_s + v_p
                states = (np.einsum("pij,sj->spi", Ms, states) + vs[None]).reshape(-1, fs.d)
        else:
            for _ in range(K):
                states = np.stack([fs.epoch(s, p, alpha) for s in states for p in perms])
    return states


def _decode(index: int, P: int, K: int) -> list[int]:
    digits = []
    for _ in range(K):
        index, r = divmod(index, P)
        digits.append(r)
    return digits[::-1]


def exhaustive_sequence_search(fs: FiniteSum, x0, alpha: float, K: int,
                               budget: SequenceSearchBudget | None = None, x_star=None,
                               objective: str | None = None) -> SearchResult:
    """Exact min (or max) of the final squared error over every sequence."""
    budget = budget or SequenceSearchBudget()
    objective = objective or budget.objective
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    xs = _xstar(fs, x_star)
    ends = enumerate_endpoints(fs, x0, alpha, K, budget)
    err = np.sum((ends - xs) ** 2, axis=1)
    err[~np.isfinite(err)] = np.inf
    j = int(np.argmin(err) if objective == "min_final_error" else np.argmax(err))
    perms = all_permutations(fs.n)
    seq = [perms[i] for i in _decode(j, len(perms), K)]
    traj = run_sequence(fs, seq, x0, alpha, xs)
    cls = None
    if len(traj.sq_errors) >= 4:
        Ks = np.arange(1, len(traj.sq_errors) + 1)
        try:
            cls = classify_decay(Ks, traj.sq_errors)
        except ContractError:
            cls = None
    return SearchResult("exhaustive", objective, seq, traj.sq_errors, traj.final_x, float(err[j]), len(err), cls)

