"""Epoch loop, trajectories, exact affine epoch maps and the FlipFlop bias term.

For quadratics a step is ``x <- (I - alpha A_i) x + alpha b_i``, so an epoch
is an affine map ``x -> M x + v``. With ``S_i = alpha A_{sigma_i}`` and
``t_i = alpha b_{sigma_i}``, a forward epoch followed by its reverse maps
``x`` to ``(prod_i (I - S_i)) (prod_i (I - S_{n-i+1})) x + z``, where products
are written left to right and ``z`` depends only on the permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .problems import ContractError, FiniteSum, QuadraticSum, _as_perm
from .schedulers import Permutation, PermutationStrategy

DIVERGENCE_NORM = 1e100
MAX_MAP_DIM = 64


class Divergence(ArithmeticError):
    """Iterates left the finite range; ``last_finite`` is the last good point."""

    def __init__(self, last_finite: np.ndarray, message: str = "iterate diverged"):
        super().__init__(message)
        self.last_finite = last_finite


def _diverged(x: np.ndarray) -> bool:
    return not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > DIVERGENCE_NORM


@dataclass(frozen=True)
class RunConfig:
    alpha: float
    K: int
    x0: np.ndarray
    record: str = "endpoints"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ContractError("alpha must be positive")
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if self.record not in ("endpoints", "all_iterates"):
            raise ContractError("record must be 'endpoints' or 'all_iterates'")


@dataclass
class Trajectory:
    """Per-epoch squared distances ``||x_n^k - x*||^2`` for k = 1..K.

    On divergence the arrays stop at the last finite epoch, ``diverged`` is
    set and ``final_x`` is the last finite endpoint.
    """

    sq_errors: np.ndarray
    final_x: np.ndarray
    algo: str
    seed: int
    n: int
    d: int
    alpha: float
    K: int
    diverged: bool = False
    diverged_epoch: int | None = None
    iterates: list[np.ndarray] | None = None
    permutations: list[Permutation] | None = None
    meta: dict[str, Any] = field(default_factory=dict)


def sgd_epoch(fs: FiniteSum, x0, perm, alpha: float) -> np.ndarray:
    """Endpoint after visiting components in ``perm`` order.

    ``perm`` is a :class:`Permutation` or a 0-based index array. Raises
    :class:`Divergence` if the endpoint is non-finite or beyond 1e100 in norm.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(fs.d)
    p = _as_perm(perm)
    if len(p) != fs.n:
        raise ContractError(f"permutation length {len(p)} != n={fs.n}")
    if not isinstance(perm, Permutation):
        Permutation(p)
    with np.errstate(over="ignore", invalid="ignore"):
        x = fs.epoch(x0, p, alpha)
    if _diverged(x):
        raise Divergence(x0.copy())
    return x


def _epoch_iterates(fs: FiniteSum, x: np.ndarray, perm: Permutation, alpha: float) -> np.ndarray:
    out = np.empty((fs.n + 1, fs.d))
    out[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for t, i in enumerate(perm.order):
            x = fs.step(int(i), x, alpha)
            out[t + 1] = x
    if _diverged(x):
        raise Divergence(out[0].copy())
    return out


def run(fs: FiniteSum, strategy: PermutationStrategy, cfg: RunConfig, x_star=None) -> Trajectory:
    """Run K epochs with the strategy's permutations."""
    if strategy.flipflop and cfg.K % 2:
        raise ContractError(f"FlipFlop requires even K, got K={cfg.K}")
    if strategy.n != fs.n:
        raise ContractError("strategy and problem disagree on n")
    xs = fs.minimizer if x_star is None else np.asarray(x_star, dtype=np.float64).reshape(fs.d)
    x = np.array(cfg.x0, dtype=np.float64).reshape(fs.d)
    full = cfg.record == "all_iterates"
    errs: list[float] = []
    its: list[np.ndarray] | None = [] if full else None
    perms: list[Permutation] | None = [] if full else None
    diverged_at = None
    for k in range(1, cfg.K + 1):
        perm = strategy.next_permutation(k)
        try:
            if full:
                block = _epoch_iterates(fs, x, perm, cfg.alpha)
                its.append(block)
                perms.append(perm)
                x = block[-1].copy()
            else:
                x = sgd_epoch(fs, x, perm, cfg.alpha)
        except Divergence:
            diverged_at = k
            break
        diff = x - xs
        errs.append(float(diff @ diff))
    return Trajectory(sq_errors=np.array(errs), final_x=x, algo=strategy.label, seed=strategy.seed,
                      n=fs.n, d=fs.d, alpha=cfg.alpha, K=cfg.K, diverged=diverged_at is not None,
                      diverged_epoch=diverged_at, iterates=its, permutations=perms)


def run_sequence(fs: FiniteSum, perms: Sequence, x0, alpha: float, x_star=None) -> Trajectory:
    """Replay an explicit permutation sequence."""
    xs = fs.minimizer if x_star is None else np.asarray(x_star, dtype=np.float64).reshape(fs.d)
    x = np.array(x0, dtype=np.float64).reshape(fs.d)
    errs = []
    diverged_at = None
    for k, p in enumerate(perms, start=1):
        try:
            x = sgd_epoch(fs, x, p, alpha)
        except Divergence:
            diverged_at = k
            break
        errs.append(float((x - xs) @ (x - xs)))
    return Trajectory(sq_errors=np.array(errs), final_x=x, algo="sequence", seed=0, n=fs.n, d=fs.d,
                      alpha=alpha, K=len(perms), diverged=diverged_at is not None, diverged_epoch=diverged_at)


# ------------------------------------------------------------ affine maps


@dataclass(frozen=True)
class AffineEpochMap:
    """``x -> M x + v``."""

    M: np.ndarray
    v: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "AffineEpochMap":
        return cls(np.eye(d), np.zeros(d))

    def apply(self, x) -> np.ndarray:
        return self.M @ np.asarray(x, dtype=np.float64) + self.v

    def then(self, nxt: "AffineEpochMap") -> "AffineEpochMap":
        """Map for applying ``self`` first and ``nxt`` second."""
        return AffineEpochMap(nxt.M @ self.M, nxt.M @ self.v + nxt.v)


def epoch_affine_map(q: QuadraticSum, perm, alpha: float, max_dim: int = MAX_MAP_DIM) -> AffineEpochMap:
    if not isinstance(q, QuadraticSum):
        raise ContractError("affine epoch maps need a QuadraticSum")
    if q.d > max_dim:
        raise ContractError(f"d={q.d} exceeds the map budget {max_dim}; simulate instead")
    eye = np.eye(q.d)
    M = eye.copy()
    v = np.zeros(q.d)
    for i in _as_perm(perm):
        P = eye - alpha * q.A[i]
        M = P @ M
        v = P @ v + alpha * q.b[i]
    return AffineEpochMap(M, v)


def compose_maps(maps: Sequence[AffineEpochMap]) -> AffineEpochMap:
    out = AffineEpochMap.identity(maps[0].M.shape[0])
    for m in maps:
        out = out.then(m)
    return out


def _check_centered(q: QuadraticSum) -> None:
    scale = max(float(np.max(np.linalg.norm(q.b, axis=1))), 1e-300)
    resid = float(np.linalg.norm(q.b.sum(axis=0)))
    if resid > 1e-10 * scale * max(1, q.n) and resid > 1e-300:
        raise ContractError(f"instance is not centered: ||sum b_i|| = {resid:.3e}")


def flipflop_bias_z(q: QuadraticSum, perm, alpha: float) -> np.ndarray:
    """The offset ``z`` of a forward-then-reversed epoch pair.

    ``z = sum_i (prod_{j=1}^n P_j)(prod_{j=1}^{n-i} P_{n+1-j}) t_i
        + sum_i (prod_{j=1}^{n-i} P_j) t_{n+1-i}``
    with ``P_j = I - S_j``, evaluated from prefix and suffix products.
    """
    if not isinstance(q, QuadraticSum):
        raise ContractError("flipflop_bias_z needs a QuadraticSum")
    _check_centered(q)
    order = _as_perm(perm)
    n, d = q.n, q.d
    eye = np.eye(d)
    P = [eye - alpha * q.A[i] for i in order]
    t = [alpha * q.b[i] for i in order]
    # left[m] = P_1 P_2 ... P_m
    left = [eye]
    for m in range(n):
        left.append(left[-1] @ P[m])
    # right[i] = P_n P_{n-1} ... P_{i+1}, 1-based i
    right = [eye] * (n + 1)
    for i in range(n - 1, -1, -1):
        right[i] = right[i + 1] @ P[i]
    first = np.zeros(d)
    second = np.zeros(d)
    for i in range(1, n + 1):
        first += right[i] @ t[i - 1]
        second += left[n - i] @ t[n - i]
    return left[n] @ first + second


def scalar_first_order_bias(a: Sequence[float], b: Sequence[float], alpha: float | None = None):
    """Leading bias coefficients for 1-D components ``a_i x^2/2 + b_i x``.

    Note the ``+ b_i x`` sign: here the gradient is ``a_i x + b_i``. Returns
    ``(sum_i b_i sum_{j>i} a_j, -sum_i b_i a_i)``, the alpha^2 coefficients of
    the one-epoch endpoint and of the FlipFlop two-epoch endpoint from 0. With
    ``alpha`` given, both are multiplied by alpha^2.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError("a and b must have equal length")
    if abs(b.sum()) > 1e-10 * max(1.0, float(np.max(np.abs(b))) if b.size else 1.0):
        raise ContractError("requires sum(b) = 0")
    tail = np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])
    one = float(b @ tail)
    two = float(-(b @ a))
    if alpha is not None:
        return one * alpha**2, two * alpha**2
    return one, two
