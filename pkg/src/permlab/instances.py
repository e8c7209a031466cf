"""Generators for the problem families studied here, and the JSON instance format.

JSON instances are either inline quadratics::

    {"kind": "quadratic", "n": 2, "d": 2,
     "A": [[[1, 0], [0, 1]], [[2, 0], [0, 1]]],   # n matrices, row-major
     "b": [[1, 0], [-1, 0]]}

(each matrix may also be a flat row-major list of d*d numbers, and a
``"diag"`` list of n diagonals may replace ``"A"``), or a named generator::

    {"kind": "mean_computation", "n": 800, "d": 100, "seed": 7}

with ``kind`` one of :data:`GENERATORS` and the generator's keyword
arguments as further fields. An optional ``"x0"`` field fixes the
initialization.
"""

from __future__ import annotations

import math
from typing import Any, Callable

import numpy as np

from .problems import (
    ContractError,
    FiniteSum,
    LogCoshSum,
    LogisticSum,
    QuadraticSum,
)
from .rng import Xoshiro256


def _need_even(n: int) -> None:
    if n < 4 or n % 2:
        raise ContractError(f"n must be even and >= 4, got {n}")


def gen_mean_computation(n: int, d: int, seed: int = 0) -> QuadraticSum:
    """``f_i(x) = ||x - p_i||^2`` with ``p_i`` uniform on the unit sphere.

    Points are normalized standard Gaussian vectors. ``A_i = 2I``, ``b_i = 2 p_i``.
    """
    if n < 1 or d < 1:
        raise ContractError("need n >= 1 and d >= 1")
    pts = np.random.default_rng(seed).standard_normal((n, d))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return QuadraticSum.diagonal(np.full((n, d), 2.0), 2.0 * pts, kind="mean_computation",
                                 params={"n": n, "d": d, "seed": seed},
                                 analytic={"mu": 2.0, "L": 2.0}, init={"rule": "random_unit"})


def _f1_blocks(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    # coordinates (x_1, y_1, ..., x_{n/2}, y_{n/2}); components f_1..f_{n/2}, g_1..g_{n/2}
    h = n // 2
    diag = np.full((n, n), float(L))
    b = np.zeros((n, n))
    for i in range(h):
        xi, yi = 2 * i, 2 * i + 1
        # f_i = L/2 x_i^2 - x_i + y_i + sum_{j != i} L/2 (x_j^2 + y_j^2)
        diag[i, yi] = 0.0
        b[i, xi], b[i, yi] = 1.0, -1.0
        # g_i = L/2 y_i^2 - y_i + x_i + sum_{j != i} L/2 (x_j^2 + y_j^2)
        diag[h + i, xi] = 0.0
        b[h + i, yi], b[h + i, xi] = 1.0, -1.0
    return diag, b


def _f2_blocks(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    # f_i(y) = -y_i + sum_{j != i} (L y_j^2 / 2 + y_j / (n - 1))
    diag = np.full((n, n), float(L))
    b = np.full((n, n), -1.0 / (n - 1))
    idx = np.arange(n)
    diag[idx, idx] = 0.0
    b[idx, idx] = 1.0
    return diag, b


def gen_lower_bound_f1(n: int, L: float = 1.0) -> QuadraticSum:
    """Paired-coordinate family; ``F(z) = ((n-1)/n)(L/2)||z||^2`` with minimizer 0."""
    _need_even(n)
    diag, b = _f1_blocks(n, L)
    return QuadraticSum.diagonal(diag, b, kind="lb_f1", params={"n": n, "L": L},
                                 analytic={"mu": (n - 1) * L / n, "L": float(L)},
                                 init={"rule": "zero"})


def gen_lower_bound_f2(n: int, L: float = 1.0) -> QuadraticSum:
    if n < 2:
        raise ContractError("n must be >= 2")
    diag, b = _f2_blocks(n, L)
    return QuadraticSum.diagonal(diag, b, kind="lb_f2", params={"n": n, "L": L},
                                 analytic={"mu": (n - 1) * L / n, "L": float(L)},
                                 init={"rule": "zero"})


def gen_lower_bound_f3(L: float = 1.0, n: int = 2) -> QuadraticSum:
    """``f_i(z) = L z^2`` for every i (so ``A_i = 2L``)."""
    if n < 1:
        raise ContractError("n must be >= 1")
    return QuadraticSum.diagonal(np.full((n, 1), 2.0 * L), np.zeros((n, 1)), kind="lb_f3",
                                 params={"n": n, "L": L}, analytic={"mu": 2.0 * L, "L": 2.0 * L},
                                 init={"rule": "point", "x": [1.0]})


def gen_lower_bound_combined(n: int, L: float = 1.0, kind: str = "lb_combined") -> QuadraticSum:
    """Block-diagonal sum of the three families over ``2n + 1`` coordinates.

    Starts at ``x = y = 0``, ``z = 1``.
    """
    _need_even(n)
    d1, b1 = _f1_blocks(n, L)
    d2, b2 = _f2_blocks(n, L)
    diag = np.hstack([d1, d2, np.full((n, 1), 2.0 * L)])
    b = np.hstack([b1, b2, np.zeros((n, 1))])
    x0 = [0.0] * (2 * n) + [1.0]
    return QuadraticSum.diagonal(diag, b, kind=kind, params={"n": n, "L": L},
                                 analytic={"mu": (n - 1) * L / n, "L": 2.0 * L},
                                 init={"rule": "point", "x": x0})


def gen_igd_hard(n: int = 64, L: float = 1.0) -> QuadraticSum:
    """Instance on which the identity order is slow.

    Uses the combined lower-bound family under identity scheduling; its
    paired coordinates accumulate a bias of order alpha^2 per epoch for every
    fixed order, which a flipped second epoch cancels.
    """
    return gen_lower_bound_combined(n, L, kind="igd_hard")


def gen_thm3_pair(L: float = 1.0) -> QuadraticSum:
    """``f_1 = L/2 x^2 - x``, ``f_2 = -L/4 x^2 + x``; ``F = L/8 x^2``, f_2 concave."""
    return QuadraticSum.diagonal(np.array([[L], [-L / 2.0]]), np.array([[1.0], [-1.0]]),
                                 kind="thm3_pair", params={"L": L},
                                 analytic={"mu": L / 4.0, "L": float(L)},
                                 init={"rule": "point", "x": [1.0 / L]})


POPULATION_LOGISTIC_MINIMIZER = -math.log(3.0)


def gen_logistic_1d(n: int = 800, seed: int = 0) -> LogisticSum:
    """Non-separable 1-D logistic data with inputs ``z = +-1``.

    Each label is ``1{z < 0}`` with probability 3/4 and ``1{z > 0}`` otherwise,
    which puts the population minimizer at ``-log 3``. Draws use the pinned
    generator.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    rng = Xoshiro256(seed)
    z = np.empty(n)
    y = np.empty(n)
    for i in range(n):
        z[i] = 1.0 if rng.bounded(2) else -1.0
        majority = rng.random() < 0.75
        y[i] = float((z[i] < 0) if majority else (z[i] > 0))
    return LogisticSum(z, y, params={"n": n, "seed": seed})


def gen_hessian_smooth_1d(spec: dict[str, Any] | None = None, **kw) -> LogCoshSum:
    """Quadratic plus log-cosh components in 1-D.

    Either give explicit ``a``, ``b``, ``eps``, ``c`` lists, or ``n`` and
    ``seed`` (optionally ``eps`` as a scalar, ``a_low``, ``a_high``) for a random
    family with ``a_i ~ U[a_low, a_high]``, centered ``b_i ~ U[-1, 1]`` and
    ``c_i ~ U[-1, 1]``.
    """
    spec = dict(spec or {}, **kw)
    if "a" in spec:
        return LogCoshSum(spec["a"], spec["b"], spec.get("eps"), spec.get("c"), params=spec)
    n = int(spec.get("n", 4))
    seed = int(spec.get("seed", 0))
    eps = float(spec.get("eps", 0.3))
    lo, hi = float(spec.get("a_low", 1.0)), float(spec.get("a_high", 2.0))
    rng = np.random.default_rng(seed)
    a = rng.uniform(lo, hi, n)
    b = rng.uniform(-1, 1, n)
    b -= b.mean()
    c = rng.uniform(-1, 1, n)
    return LogCoshSum(a, b, np.full(n, eps), c,
                      params={"n": n, "seed": seed, "eps": eps, "a_low": lo, "a_high": hi},
                      init={"rule": "offset", "offset": 1.0})


GENERATORS: dict[str, Callable[..., FiniteSum]] = {
    "mean_computation": gen_mean_computation,
    "lb_f1": gen_lower_bound_f1,
    "lb_f2": gen_lower_bound_f2,
    "lb_f3": gen_lower_bound_f3,
    "lb_combined": gen_lower_bound_combined,
    "thm3_pair": gen_thm3_pair,
    "logistic_1d": gen_logistic_1d,
    "hessian_smooth_1d": gen_hessian_smooth_1d,
    "igd_hard": gen_igd_hard,
}


def initial_point(fs: FiniteSum, seed: int = 0) -> np.ndarray:
    """Initialization per the instance's rule.

    ``random_unit``: uniform on the unit sphere; ``zero``; ``point``: fixed;
    ``random_box``: minimizer plus U[-radius, radius] per coordinate;
    ``offset``: minimizer plus a fixed offset.
    """
    rule = fs.init.get("rule", "random_unit")
    if rule == "random_unit":
        v = np.random.default_rng(seed).standard_normal(fs.d)
        return v / np.linalg.norm(v)
    if rule == "zero":
        return np.zeros(fs.d)
    if rule == "point":
        return np.asarray(fs.init["x"], dtype=np.float64).reshape(fs.d)
    if rule == "random_box":
        r = float(fs.init.get("radius", 1.0))
        return fs.minimizer + np.random.default_rng(seed).uniform(-r, r, fs.d)
    if rule == "offset":
        return fs.minimizer + float(fs.init["offset"])
    raise ContractError(f"unknown init rule {rule!r}")


def _matrices(raw, n: int, d: int) -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape == (n, d * d):
        arr = arr.reshape(n, d, d)
    if arr.shape != (n, d, d):
        raise ContractError(f"A must hold {n} matrices of size {d}x{d}")
    return arr


def from_json(obj: dict[str, Any]) -> FiniteSum:
    """Build a problem from the JSON instance format."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ContractError("instance must be an object with a 'kind' field")
    obj = dict(obj)
    kind = obj.pop("kind")
    x0 = obj.pop("x0", None)
    if kind == "quadratic":
        try:
            n, d = int(obj["n"]), int(obj["d"])
            b = np.asarray(obj["b"], dtype=np.float64).reshape(n, d)
        except KeyError as e:
            raise ContractError(f"quadratic instance missing field {e.args[0]!r}") from None
        if "diag" in obj:
            fs = QuadraticSum.diagonal(np.asarray(obj["diag"], dtype=np.float64).reshape(n, d), b)
        elif "A" in obj:
            fs = QuadraticSum.dense(_matrices(obj["A"], n, d), b)
        else:
            raise ContractError("quadratic instance needs 'A' or 'diag'")
    elif kind in GENERATORS:
        try:
            fs = GENERATORS[kind](**obj)
        except TypeError as e:
            raise ContractError(f"bad parameters for {kind}: {e}") from None
    else:
        raise ContractError(f"unknown instance kind {kind!r}")
    if x0 is not None:
        fs.init = {"rule": "point", "x": list(np.asarray(x0, dtype=float).reshape(-1))}
    return fs


def to_json(fs: FiniteSum) -> dict[str, Any]:
    if fs.kind in GENERATORS:
        return {"kind": fs.kind, **fs.params}
    if isinstance(fs, QuadraticSum):
        out: dict[str, Any] = {"kind": "quadratic", "n": fs.n, "d": fs.d}
        if fs.is_diagonal:
            out["diag"] = fs.diag.tolist()
        else:
            out["A"] = fs.A.tolist()
        out["b"] = fs.b.tolist()
        return out
    raise ContractError(f"cannot serialize {type(fs).__name__}")
