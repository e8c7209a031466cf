"""Finite-sum problems, instance statistics and step-size rules.

Every problem is ``F(x) = (1/n) sum_i f_i(x)``. Quadratic components use the
convention ``f_i(x) = 1/2 x^T A_i x - b_i^T x``, so ``grad f_i(x) = A_i x - b_i``
and constants are never stored. One-dimensional non-quadratic families
(logistic, quadratic plus log-cosh) and user-supplied callables share the same
interface. Component indices are 0-based on methods and 1-based in the
module-level :func:`gradient`.

Problem objects are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from ._backend import kernels

# third derivative of log cosh is -2 sech^2 tanh; its sup is 4/(3 sqrt 3)
LOGCOSH_D3_MAX = 4.0 / (3.0 * math.sqrt(3.0))


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class NotStronglyConvexError(ValueError):
    """The mean Hessian is singular or indefinite."""


class StepSizeError(ValueError):
    """A theorem step-size rule resolved outside its admissible range."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _as_perm(perm) -> np.ndarray:
    order = getattr(perm, "order", perm)
    return np.ascontiguousarray(order, dtype=np.int64)


class ComponentFunction(Protocol):
    def gradient(self, x: np.ndarray) -> np.ndarray: ...


class FiniteSum:
    """Base class. Subclasses implement ``grad`` and ``_stats_core``."""

    n: int
    d: int
    kind: str = "custom"
    params: dict[str, Any]
    init: dict[str, Any]

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no value()")

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return sum(self.grad(i, x) for i in range(self.n)) / self.n

    def step(self, i: int, x: np.ndarray, alpha: float) -> np.ndarray:
        return x - alpha * self.grad(i, x)

    def epoch(self, x: np.ndarray, perm, alpha: float) -> np.ndarray:
        """Endpoint of one pass in ``perm`` order (0-based). Returns a new array."""
        x = np.array(x, dtype=np.float64)
        for i in _as_perm(perm):
            x = self.step(int(i), x, alpha)
        return x

    def _stats_core(self) -> tuple[float, float, np.ndarray]:
        """Return ``(mu, L, x_star)``."""
        raise NotImplementedError

    @property
    def minimizer(self) -> np.ndarray:
        cached = self.__dict__.get("_xstar")
        if cached is None:
            cached = _frozen(self._stats_core()[2])
            self.__dict__["_xstar"] = cached
        return cached

    @property
    def hessian_lipschitz(self) -> float:
        return 0.0


class QuadraticSum(FiniteSum):
    """``F(x) = (1/n) sum 1/2 x^T A_i x - b_i^T x``.

    Store either dense ``A`` of shape (n, d, d) or the diagonals of diagonal
    Hessians in ``diag`` of shape (n, d). The dense form of a diagonal
    instance is materialized on first access to :attr:`A`.

    ``analytic`` may carry exact ``mu`` and ``L`` for constructed families;
    they override eigensolver output in :func:`instance_stats`.
    """

    kind = "quadratic"

    def __init__(
        self,
        b: np.ndarray,
        A: np.ndarray | None = None,
        diag: np.ndarray | None = None,
        *,
        strongly_convex: bool = True,
        kind: str = "quadratic",
        params: dict[str, Any] | None = None,
        analytic: dict[str, float] | None = None,
        init: dict[str, Any] | None = None,
    ):
        b = np.asarray(b, dtype=np.float64)
        if b.ndim != 2:
            raise ContractError("b must have shape (n, d)")
        n, d = b.shape
        if n < 1 or d < 1:
            raise ContractError("need n >= 1 and d >= 1")
        if (A is None) == (diag is None):
            raise ContractError("give exactly one of A or diag")
        if diag is not None:
            diag = np.asarray(diag, dtype=np.float64)
            if diag.shape != (n, d):
                raise ContractError(f"diag must have shape {(n, d)}, got {diag.shape}")
            self._diag = _frozen(diag)
            self._A = None
        else:
            A = np.asarray(A, dtype=np.float64)
            if A.shape != (n, d, d):
                raise ContractError(f"A must have shape {(n, d, d)}, got {A.shape}")
            scale = max(1.0, float(np.max(np.abs(A))))
            asym = float(np.max(np.abs(A - np.swapaxes(A, 1, 2))))
            if asym > 1e-12 * scale:
                raise ContractError(f"A_i not symmetric (max asymmetry {asym:.3e})")
            self._A = _frozen(A)
            off = A.copy()
            idx = np.arange(d)
            off[:, idx, idx] = 0.0
            self._diag = _frozen(A[:, idx, idx]) if not np.any(off) else None
        self.b = _frozen(b)
        self.n, self.d = n, d
        self.strongly_convex = strongly_convex
        self.kind = kind
        self.params = dict(params or {})
        self.analytic = dict(analytic or {})
        self.init = dict(init or {"rule": "random_unit"})

    @classmethod
    def dense(cls, A, b, **kw) -> "QuadraticSum":
        return cls(b, A=A, **kw)

    @classmethod
    def diagonal(cls, diag, b, **kw) -> "QuadraticSum":
        return cls(b, diag=diag, **kw)

    @property
    def is_diagonal(self) -> bool:
        return self._diag is not None

    @property
    def diag(self) -> np.ndarray | None:
        return self._diag

    @property
    def A(self) -> np.ndarray:
        if self._A is None:
            n, d = self._diag.shape
            A = np.zeros((n, d, d))
            idx = np.arange(d)
            A[:, idx, idx] = self._diag
            self._A = _frozen(A)
        return self._A

    def mean_hessian(self) -> np.ndarray:
        if self._diag is not None:
            return np.diag(self._diag.mean(axis=0))
        return self._A.mean(axis=0)

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        if self._diag is not None:
            return self._diag[i] * x - self.b[i]
        return self._A[i] @ x - self.b[i]

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self._diag is not None:
            return self._diag.mean(axis=0) * x - self.b.mean(axis=0)
        return self.mean_hessian() @ x - self.b.mean(axis=0)

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(0.5 * x @ self.mean_hessian() @ x - self.b.mean(axis=0) @ x)

    def epoch(self, x: np.ndarray, perm, alpha: float) -> np.ndarray:
        x = np.array(x, dtype=np.float64)
        p = _as_perm(perm)
        if self._diag is not None:
            kernels.diag_epoch(self._diag, self.b, x, p, float(alpha))
        else:
            kernels.dense_epoch(self._A, self.b, x, p, float(alpha), np.empty(self.d))
        return x

    def _stats_core(self) -> tuple[float, float, np.ndarray]:
        Abar = self.mean_hessian()
        bbar = self.b.mean(axis=0)
        if self._diag is not None:
            ev = np.diag(Abar)
            mu = float(ev.min())
            L = float(np.max(np.abs(self._diag)))
        else:
            mu = float(np.linalg.eigvalsh(Abar)[0])
            L = float(max(np.max(np.abs(np.linalg.eigvalsh(Ai))) for Ai in self._A))
        mu = float(self.analytic.get("mu", mu))
        L = float(self.analytic.get("L", L))
        scale = max(L, 1e-300)
        if not mu > 1e-12 * scale:
            raise NotStronglyConvexError(f"mean Hessian not positive definite (lambda_min={mu:.3e})")
        if self._diag is not None:
            xs = bbar / np.diag(Abar)
        else:
            xs = np.linalg.solve(Abar, bbar)
        return mu, L, xs

    def with_b(self, b: np.ndarray) -> "QuadraticSum":
        kw = dict(strongly_convex=self.strongly_convex, kind=self.kind, params=self.params,
                  analytic=self.analytic, init=self.init)
        if self._diag is not None:
            return QuadraticSum(b, diag=self._diag, **kw)
        return QuadraticSum(b, A=self._A, **kw)


class ScalarSum(FiniteSum):
    """Base for 1-D families; iterates are arrays of shape (1,)."""

    d = 1

    def _g(self, i: int, x: float) -> float:
        raise NotImplementedError

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return np.array([self._g(i, float(np.asarray(x).reshape(-1)[0]))])

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        xv = float(np.asarray(x).reshape(-1)[0])
        return np.array([math.fsum(self._g(i, xv) for i in range(self.n)) / self.n])

    def _newton_minimizer(self, lo: float, hi: float) -> float:
        """Safeguarded Newton/bisection on the increasing function F'."""
        fp = lambda t: float(self.full_grad(np.array([t]))[0])
        while fp(lo) > 0:
            lo -= 2 * (hi - lo)
        while fp(hi) < 0:
            hi += 2 * (hi - lo)
        x = 0.5 * (lo + hi)
        for _ in range(400):
            g = fp(x)
            if abs(g) <= 1e-15:
                break
            if g > 0:
                hi = x
            else:
                lo = x
            h = self._curvature(x)
            xn = x - g / h if h > 0 else 0.5 * (lo + hi)
            x = xn if lo < xn < hi else 0.5 * (lo + hi)
            if hi - lo <= 4e-16 * max(1.0, abs(x)):
                break
        return x

    def _curvature(self, x: float) -> float:
        raise NotImplementedError


class LogisticSum(ScalarSum):
    """1-D logistic regression with inputs ``z_i`` and labels ``y_i``.

    ``f_i(x) = -y_i log h(x z_i) - (1 - y_i) log(1 - h(x z_i))`` with the
    sigmoid ``h``; ``grad f_i(x) = (h(x z_i) - y_i) z_i``.
    """

    kind = "logistic_1d"

    def __init__(self, z, y, *, params=None, init=None):
        self.z = _frozen(np.asarray(z, dtype=np.float64))
        self.y = _frozen(np.asarray(y, dtype=np.float64))
        if self.z.shape != self.y.shape or self.z.ndim != 1:
            raise ContractError("z and y must be 1-D arrays of equal length")
        self.n = len(self.z)
        self.params = dict(params or {})
        self.init = dict(init or {"rule": "random_box", "radius": 1.0})

    @staticmethod
    def _h(t: float) -> float:
        if t >= 0:
            return 1.0 / (1.0 + math.exp(-t))
        e = math.exp(t)
        return e / (1.0 + e)

    def _g(self, i: int, x: float) -> float:
        return (self._h(x * self.z[i]) - self.y[i]) * self.z[i]

    def value(self, x) -> float:
        xv = float(np.asarray(x).reshape(-1)[0])
        t = xv * self.z
        # -y log h(t) - (1-y) log(1-h(t)) = log(1+e^t) - y t
        return float(np.mean(np.logaddexp(0.0, t) - self.y * t))

    def _curvature(self, x: float) -> float:
        hs = np.array([self._h(x * zi) for zi in self.z])
        return float(np.mean(hs * (1 - hs) * self.z**2))

    def epoch(self, x, perm, alpha):
        xv = kernels.logistic_epoch(self.z, self.y, float(np.asarray(x).reshape(-1)[0]),
                                    _as_perm(perm), float(alpha))
        return np.array([xv])

    def _stats_core(self):
        if np.all(np.abs(self.z) == 1.0):
            # F'(x) = (1/n)[n_plus h(x) - Y_plus - n_minus (1 - h(x)) + Y_minus]
            pos = self.z > 0
            p = (self.y[pos].sum() + (~pos).sum() - self.y[~pos].sum()) / self.n
            if not 0.0 < p < 1.0:
                raise NotStronglyConvexError("labels are separable; no finite minimizer")
            xs = math.log(p / (1.0 - p))
        else:
            xs = self._newton_minimizer(-1.0, 1.0)
        mu = self._curvature(xs)
        L = float(np.max(self.z**2)) / 4.0
        return mu, L, np.array([xs])


class LogCoshSum(ScalarSum):
    """1-D components ``a_i x^2/2 - b_i x + eps_i log cosh(x - c_i)``.

    Curvature of component i lies in ``[a_i, a_i + eps_i]`` (for eps_i >= 0)
    and its second derivative is ``eps_i * 4/(3 sqrt 3)``-Lipschitz.
    """

    kind = "hessian_smooth_1d"

    def __init__(self, a, b, eps=None, c=None, *, params=None, init=None):
        self.a = _frozen(np.asarray(a, dtype=np.float64))
        self.n = len(self.a)
        z = np.zeros(self.n)
        self.b = _frozen(np.asarray(b, dtype=np.float64))
        self.eps = _frozen(np.asarray(eps if eps is not None else z, dtype=np.float64))
        self.c = _frozen(np.asarray(c if c is not None else z, dtype=np.float64))
        for arr in (self.b, self.eps, self.c):
            if arr.shape != (self.n,):
                raise ContractError("a, b, eps, c must share length n")
        if np.any(self.eps < 0):
            raise ContractError("eps must be non-negative")
        self.params = dict(params or {})
        self.init = dict(init or {"rule": "random_box", "radius": 1.0})

    def _g(self, i: int, x: float) -> float:
        return self.a[i] * x - self.b[i] + self.eps[i] * math.tanh(x - self.c[i])

    def value(self, x) -> float:
        xv = float(np.asarray(x).reshape(-1)[0])
        u = xv - self.c
        logcosh = np.logaddexp(u, -u) - math.log(2.0)
        return float(np.mean(0.5 * self.a * xv**2 - self.b * xv + self.eps * logcosh))

    def second_derivative(self, i: int, x: float) -> float:
        return self.a[i] + self.eps[i] / math.cosh(x - self.c[i]) ** 2

    def _curvature(self, x: float) -> float:
        return float(np.mean(self.a + self.eps / np.cosh(x - self.c) ** 2))

    @property
    def hessian_lipschitz(self) -> float:
        return float(np.max(self.eps)) * LOGCOSH_D3_MAX

    def epoch(self, x, perm, alpha):
        xv = kernels.logcosh_epoch(self.a, self.b, self.eps, self.c,
                                   float(np.asarray(x).reshape(-1)[0]), _as_perm(perm), float(alpha))
        return np.array([xv])

    def _stats_core(self):
        mu = float(np.mean(self.a))
        if not mu > 0:
            raise NotStronglyConvexError("mean of a_i must be positive")
        L = float(np.max(np.maximum(np.abs(self.a), np.abs(self.a + self.eps))))
        xs = self._newton_minimizer(-1.0, 1.0)
        return mu, L, np.array([xs])


class CallableSum(FiniteSum):
    """Finite sum over user components implementing :class:`ComponentFunction`.

    ``mu`` and ``L`` must be supplied. The minimizer is found by full-gradient
    descent with step ``1/L`` until the gradient norm is at most 1e-12,
    unless ``x_star`` is given.
    """

    kind = "custom"

    def __init__(self, components: Sequence[ComponentFunction], d: int, *, mu: float, L: float,
                 x_star=None, L_H: float = 0.0, init=None):
        self.components = list(components)
        self.n, self.d = len(self.components), d
        self._mu, self._L, self._LH = float(mu), float(L), float(L_H)
        self._given = None if x_star is None else np.asarray(x_star, dtype=np.float64)
        self.params = {}
        self.init = dict(init or {"rule": "random_unit"})

    def grad(self, i, x):
        return np.asarray(self.components[i].gradient(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def value(self, x):
        return float(np.mean([c.value(x) for c in self.components]))

    @property
    def hessian_lipschitz(self) -> float:
        return self._LH

    def _stats_core(self):
        if self._given is not None:
            return self._mu, self._L, self._given
        x = np.zeros(self.d)
        for _ in range(1_000_000):
            g = self.full_grad(x)
            if np.linalg.norm(g) <= 1e-12:
                break
            x = x - g / self._L
        return self._mu, self._L, x


# ---------------------------------------------------------------- operations


def gradient(fs: FiniteSum, i: int, x) -> np.ndarray:
    """Gradient of component ``i`` (1-based) at ``x``."""
    if not isinstance(i, (int, np.integer)) or not 1 <= i <= fs.n:
        raise ContractError(f"component index must be in [1, {fs.n}], got {i}")
    x = np.asarray(x, dtype=np.float64).reshape(fs.d)
    if not np.all(np.isfinite(x)):
        raise ContractError("x must be finite")
    return fs.grad(int(i) - 1, x)


def full_gradient(fs: FiniteSum, x) -> np.ndarray:
    return fs.full_grad(np.asarray(x, dtype=np.float64).reshape(fs.d))


@dataclass(frozen=True)
class InstanceStats:
    mu: float
    L: float
    kappa: float
    minimizer: np.ndarray
    g_star: float
    D: float
    G: float
    L_H: float = 0.0

    def as_dict(self) -> dict[str, Any]:
        return {"mu": self.mu, "L": self.L, "kappa": self.kappa, "minimizer": self.minimizer.tolist(),
                "g_star": self.g_star, "D": self.D, "G": self.G, "L_H": self.L_H}


def instance_stats(fs: FiniteSum, x0=None) -> InstanceStats:
    """Constants of ``fs`` for a run started at ``x0`` (default: the minimizer).

    ``L`` is the largest spectral norm among the component Hessians, which is
    ``max_i lambda_max(A_i)`` for convex components.
    """
    mu, L, xs = fs._stats_core()
    xs = np.asarray(xs, dtype=np.float64)
    g_star = max(float(np.linalg.norm(fs.grad(i, xs))) for i in range(fs.n))
    x0 = xs if x0 is None else np.asarray(x0, dtype=np.float64).reshape(fs.d)
    D = max(float(np.linalg.norm(x0 - xs)), g_star / (2 * L))
    return InstanceStats(mu=mu, L=L, kappa=max(L / mu, 1.0), minimizer=xs, g_star=g_star,
                         D=D, G=g_star + 2 * D * L, L_H=fs.hessian_lipschitz)


def translate_to_origin(q: QuadraticSum) -> QuadraticSum:
    """Shift coordinates so the minimizer is 0; then ``sum_i b_i = 0``."""
    _, _, xs = q._stats_core()
    if q.is_diagonal:
        b = q.b - q.diag * xs
    else:
        b = q.b - np.einsum("ijk,k->ij", q.A, xs)
    out = q.with_b(b)
    out.__dict__["_xstar"] = _frozen(np.zeros(q.d))
    return out


# ---------------------------------------------------------------- step sizes

STEP_VARIANTS = ("explicit", "thm4_ss", "thm5_rr", "thm6_igd", "thm1_1d")
_DEFAULT_COEF = {"thm4_ss": 10.0, "thm5_rr": 10.0, "thm6_igd": 6.0, "thm1_1d": 8.0}


@dataclass(frozen=True)
class StepSizeRule:
    """Constant step size, explicit or from a theorem's formula.

    ``thm4_ss``/``thm5_rr``: ``coef * log(nK) / (mu n K)`` (coef 10 by default);
    ``thm6_igd``: same with coef 6; ``thm1_1d``: ``mu / (coef n (L^2 + L_H G))``
    with coef 8. ``coef`` overrides the leading constant.
    """

    variant: str = "explicit"
    alpha: float | None = None
    coef: float | None = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.variant not in STEP_VARIANTS:
            raise ValueError(f"unknown step-size rule {self.variant!r}")
        if self.variant == "explicit" and (self.alpha is None or not self.alpha > 0):
            raise ValueError("explicit rule needs alpha > 0")

    @classmethod
    def parse(cls, text: str) -> "StepSizeRule":
        """``"0.01"``, ``"thm5_rr"`` or ``"thm5_rr:1.5"`` (rule with coefficient)."""
        name, _, coef = text.partition(":")
        try:
            return cls("explicit", alpha=float(name))
        except ValueError:
            return cls(name, coef=float(coef) if coef else None)

    def label(self) -> str:
        if self.variant == "explicit":
            return repr(self.alpha)
        return self.variant if self.coef is None else f"{self.variant}:{self.coef:g}"

    def resolve(self, n: int, K: int, mu: float, L: float, L_H: float = 0.0, G: float = 0.0) -> float:
        if self.variant == "explicit":
            return float(self.alpha)
        c = self.coef if self.coef is not None else _DEFAULT_COEF[self.variant]
        if self.variant == "thm1_1d":
            alpha = mu / (c * n * (L * L + L_H * G))
        else:
            alpha = c * math.log(n * K) / (mu * n * K)
        if not alpha > 0:
            raise StepSizeError(f"{self.variant} resolved to non-positive alpha {alpha}")
        if alpha > 1.0 / L * (1 + 1e-12):
            raise StepSizeError(f"{self.variant} gives alpha={alpha:.4g} > 1/L={1 / L:.4g}; increase K")
        return alpha
