"""Rate fitting and numerical checks of the supporting lemmas.

Every verifier is hypothesis-gated: parameters outside a lemma's
preconditions yield status ``"hypothesis unmet"``, never a violation.
Monte-Carlo verifiers compare the empirical mean against the bound plus three
standard errors, so results are deterministic for a fixed seed.

Random matrices and instances come from ``numpy.random.default_rng(seed)``;
permutations come from the pinned generator seeded with the same ``seed``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .engine import RunConfig, flipflop_bias_z, run
from .problems import ContractError, LogCoshSum, QuadraticSum, instance_stats
from .rng import Xoshiro256
from .schedulers import make_strategy, shuffle

ERROR_FLOOR = 1e-300


# ------------------------------------------------------------------ rate fits


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``log(error)`` against ``log K`` or ``K``."""

    model: str
    slope: float
    intercept: float
    r_squared: float
    k_range: tuple[float, float]
    n_points: int
    burn_in: int = 0

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def _prepare(Ks, errors, burn_in: float):
    Ks = np.asarray(Ks, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if Ks.shape != errors.shape or Ks.ndim != 1:
        raise ContractError("Ks and errors must be 1-D and equally long")
    if len(Ks) < 4:
        raise ContractError("need at least 4 points to fit a rate")
    skip = int(math.ceil(burn_in * len(Ks) - 1e-12))
    Ks, errors = Ks[skip:], errors[skip:]
    keep = np.isfinite(errors) & (errors > ERROR_FLOOR)
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} non-positive or non-finite errors", RuntimeWarning)
        Ks, errors = Ks[keep], errors[keep]
    if len(Ks) < 2:
        raise ContractError("fewer than 2 usable points after burn-in and filtering")
    return Ks, np.log(errors), skip


def _linefit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx) if sxx > 0 else 0.0
    intercept = float(ym - slope * xm)
    ss_tot = float(((y - ym) ** 2).sum())
    ss_res = float(((y - (intercept + slope * x)) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.abs(y).max()) ** 2) else 1.0 - ss_res / ss_tot
    return slope, intercept, min(1.0, max(0.0, r2))


def fit_poly_rate(Ks: Sequence[float], errors: Sequence[float], burn_in: float = 0.25) -> RateFit:
    """Slope of ``log error`` against ``log K``; error ~ K^slope."""
    K, y, skip = _prepare(Ks, errors, burn_in)
    s, c, r2 = _linefit(np.log(K), y)
    return RateFit("poly", s, c, r2, (float(K[0]), float(K[-1])), len(K), skip)


def fit_exp_rate(Ks: Sequence[float], errors: Sequence[float], burn_in: float = 0.25) -> RateFit:
    """Slope of ``log error`` against ``K``; error ~ exp(slope K)."""
    K, y, skip = _prepare(Ks, errors, burn_in)
    s, c, r2 = _linefit(K, y)
    return RateFit("exp", s, c, r2, (float(K[0]), float(K[-1])), len(K), skip)


def compare_models(Ks, errors, burn_in: float = 0.25) -> RateFit:
    """The better of the two fits by residual (ties go to ``poly``)."""
    p = fit_poly_rate(Ks, errors, burn_in)
    e = fit_exp_rate(Ks, errors, burn_in)
    return e if e.r_squared > p.r_squared else p


@dataclass(frozen=True)
class DecayClassification:
    label: str
    poly: RateFit
    exp: RateFit

    def as_dict(self) -> dict[str, Any]:
        return {"label": self.label, "poly": self.poly.as_dict(), "exp": self.exp.as_dict()}


def classify_decay(Ks, errors, burn_in: float = 0.0, flat_decades: float = 1.0) -> DecayClassification:
    """``exponential``, ``polynomial`` or ``flat``.

    ``flat`` when the fitted trend drops the error by less than
    ``flat_decades`` decades across the window; otherwise the model with the
    higher R^2 wins.
    """
    p = fit_poly_rate(Ks, errors, burn_in)
    e = fit_exp_rate(Ks, errors, burn_in)
    drop = -e.slope * (e.k_range[1] - e.k_range[0]) / math.log(10)
    if drop < flat_decades:
        label = "flat"
    else:
        label = "exponential" if e.r_squared > p.r_squared else "polynomial"
    return DecayClassification(label, p, e)


# --------------------------------------------------------------- lemma checks


@dataclass
class LemmaReport:
    lemma: str
    status: str
    trials: int
    violations: int
    worst_margin: float | None
    parameters: dict[str, Any]
    stats: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, default=float)


def _unmet(lemma: str, params: dict[str, Any], why: str) -> LemmaReport:
    return LemmaReport(lemma, "hypothesis unmet", 0, 0, None, params, notes=[why])


def _finish(lemma, trials, margins, params, stats, notes=()) -> LemmaReport:
    margins = np.asarray(margins, dtype=np.float64)
    viol = int((margins < 0).sum())
    worst = float(margins.min()) if margins.size else None
    return LemmaReport(lemma, "pass" if viol == 0 else "fail", trials, viol, worst, params, stats, list(notes))


def haar_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def sample_psd_components(rng: np.random.Generator, n: int, d: int, mu: float, L: float) -> np.ndarray:
    """n symmetric matrices with spectra in [0, L] and mean-spectrum min >= mu.

    Draws ``Q diag(U[0, L]) Q^T`` with Haar ``Q``; if the mean falls short of
    ``mu``, every matrix is pulled toward ``L I`` by the same convex weight,
    which keeps spectra inside [0, L] and lifts the mean minimum to ``mu``.
    """
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    A = np.empty((n, d, d))
    for i in range(n):
        Q = haar_orthogonal(rng, d)
        A[i] = (Q * rng.uniform(0.0, L, d)) @ Q.T
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    m = float(np.linalg.eigvalsh(A.mean(axis=0))[0])
    if m < mu:
        theta = (mu - m) / (L - m)
        A = (1 - theta) * A + theta * L * np.eye(d)
    return 0.5 * (A + np.swapaxes(A, 1, 2))


def amgm_alpha_bound(n: int, mu: float, L: float) -> float:
    kappa = L / mu
    return min(2.0, math.sqrt(kappa) / n) / (8 * kappa * L)


def verify_amgm_matrix(trials: int = 1000, n: int = 4, d: int = 3, mu: float = 1.0, L: float = 10.0,
                       alpha: float | None = None, seed: int = 0) -> LemmaReport:
    """Spectral norm of the forward-times-reversed product against ``1 - alpha n mu``."""
    if not 0 < mu <= L:
        raise ValueError(f"infeasible parameters: need 0 < mu <= L, got mu={mu}, L={L}")
    bound_alpha = amgm_alpha_bound(n, mu, L)
    alpha = bound_alpha if alpha is None else float(alpha)
    params = {"n": n, "d": d, "mu": mu, "L": L, "alpha": alpha, "alpha_max": bound_alpha, "seed": seed}
    if not 0 < alpha <= bound_alpha * (1 + 1e-12):
        return _unmet("amgm", params, "alpha exceeds (1/(8 kappa L)) min{2, sqrt(kappa)/n}")
    rng = np.random.default_rng(seed)
    eye = np.eye(d)
    target = 1 - alpha * n * mu
    margins, norms = [], []
    for _ in range(trials):
        A = sample_psd_components(rng, n, d, mu, L)
        P = [eye - alpha * A[i] for i in range(n)]
        fwd = eye
        for Pi in P:
            fwd = fwd @ Pi
        rev = eye
        for Pi in reversed(P):
            rev = rev @ Pi
        nrm = float(np.linalg.norm(fwd @ rev, 2))
        norms.append(nrm)
        margins.append(target + 1e-12 - nrm)
    stats = {"bound": target, "max_norm": max(norms), "mean_norm": float(np.mean(norms))}
    return _finish("amgm", trials, margins, params, stats)


def _random_scalar_family(rng, n: int, eps: float) -> LogCoshSum:
    a = rng.uniform(0.5, 2.0, n)
    b = rng.uniform(-1.0, 1.0, n)
    b -= b.mean()
    c = rng.uniform(-1.0, 1.0, n)
    return LogCoshSum(a, b, np.full(n, eps), c)


def verify_coupling(trials: int = 500, family: str = "quadratic", n: int = 4, K: int = 4,
                    seed: int = 0, alpha_scale: float = 1.0) -> LemmaReport:
    """Two 1-D runs sharing permutations stay within the contraction sandwich.

    Per epoch, ``(1 - alpha L)^n |D0| <= |Dn| <= (1 - n mu alpha / 2) |D0|`` for
    ``alpha = alpha_scale * mu / (2 n (L^2 + L_H G))``. ``family`` is
    ``"quadratic"`` (L_H = 0) or ``"logcosh"``.
    """
    if family not in ("quadratic", "logcosh"):
        raise ValueError("family must be 'quadratic' or 'logcosh'")
    params = {"family": family, "n": n, "K": K, "alpha_scale": alpha_scale, "seed": seed}
    if alpha_scale > 1 + 1e-12:
        return _unmet("coupling", params, "alpha above mu / (2n(L^2 + L_H G))")
    eps = 0.0 if family == "quadratic" else 0.3
    rng = np.random.default_rng(seed)
    prng = Xoshiro256(seed)
    margins, ratios = [], []
    for _ in range(trials):
        fs = _random_scalar_family(rng, n, eps)
        xs = float(fs.minimizer[0])
        x0 = xs + rng.uniform(-1.0, 1.0)
        y0 = xs + rng.uniform(-1.0, 1.0)
        st = instance_stats(fs, np.array([x0]))
        D = max(abs(x0 - xs), abs(y0 - xs), st.g_star / (2 * st.L))
        G = st.g_star + 2 * D * st.L
        alpha = alpha_scale * st.mu / (2 * n * (st.L**2 + st.L_H * G))
        lo_f = (1 - alpha * st.L) ** n
        hi_f = 1 - n * st.mu * alpha / 2
        x, y = np.array([x0]), np.array([y0])
        for _k in range(K):
            perm = shuffle(prng, n)
            gap0 = abs(float(y[0] - x[0]))
            x, y = fs.epoch(x, perm, alpha), fs.epoch(y, perm, alpha)
            gap = abs(float(y[0] - x[0]))
            tol = 1e-12 * gap0 + 1e-300
            margins.append(min(gap - lo_f * gap0 + tol, hi_f * gap0 - gap + tol))
            if gap0 > 0:
                ratios.append((gap / gap0) / hi_f)
    stats = {"max_ratio_to_upper": float(max(ratios)) if ratios else None,
             "min_ratio_to_upper": float(min(ratios)) if ratios else None}
    return _finish("coupling", trials, margins, params, stats)


def random_centered_quadratic(rng, n: int, d: int, mu: float = 0.5, L: float = 1.0) -> QuadraticSum:
    A = sample_psd_components(rng, n, d, mu, L)
    b = rng.standard_normal((n, d))
    b -= b.mean(axis=0)
    return QuadraticSum.dense(A, b)


def verify_prefix_sums(trials: int = 100_000, q: QuadraticSum | None = None, alpha: float = 0.01,
                       seed: int = 0, n: int = 10, d: int = 3) -> LemmaReport:
    """Monte-Carlo ``E||sum_{i<=j} t_i||^2`` against ``18 j alpha^2 G*^2 log n``.

    Also checks the cross moment ``E ||S_j|| ||S_l||`` against
    ``18 sqrt(jl) alpha^2 G*^2 log n``.
    """
    if q is None:
        q = random_centered_quadratic(np.random.default_rng(seed), n, d)
    n, d = q.n, q.d
    params = {"n": n, "d": d, "alpha": alpha, "seed": seed}
    resid = float(np.linalg.norm(q.b.sum(axis=0)))
    if resid > 1e-10 * max(1.0, float(np.abs(q.b).max())) * n:
        return _unmet("prefix", params, "instance not centered (sum b_i != 0)")
    if n < 2:
        return _unmet("prefix", params, "needs n >= 2 (log n > 0)")
    g_star = float(np.max(np.linalg.norm(q.b, axis=1)))
    prng = Xoshiro256(seed)
    sums = np.empty((trials, n, d))
    tb = alpha * q.b
    for t in range(trials):
        sums[t] = np.cumsum(tb[shuffle(prng, n).order], axis=0)
    norms = np.linalg.norm(sums, axis=2)
    sq = norms**2
    mean = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(trials)
    j = np.arange(1, n + 1)
    scale = 18 * alpha**2 * g_star**2 * math.log(n)
    bound = scale * j
    margins = list(bound + 3 * se - mean)
    # cross moments for all pairs j < l
    cross_worst = math.inf
    for a in range(n):
        for c in range(a + 1, n):
            prod = norms[:, a] * norms[:, c]
            m = prod.mean()
            s = prod.std(ddof=1) / math.sqrt(trials)
            mg = scale * math.sqrt((a + 1) * (c + 1)) + 3 * s - m
            margins.append(mg)
            cross_worst = min(cross_worst, mg)
    stats = {"g_star": g_star, "mean_sq": mean.tolist(), "bound": bound.tolist(),
             "max_ratio": float(np.max(mean / bound)), "cross_worst_margin": cross_worst,
             "last_prefix_max": float(sq[:, -1].max())}
    return _finish("prefix", trials, margins, params, stats)


def z_moment_bound(n: int, alpha: float, L: float, g_star: float, G: float) -> float:
    return 2 * n**2 * alpha**4 * L**2 * g_star**2 + 170 * n**5 * alpha**6 * L**4 * G**2 * math.log(n)


def verify_z_moment(trials: int = 10_000, q: QuadraticSum | None = None, alpha: float = 0.05,
                    seed: int = 0, n: int = 6, d: int = 2) -> LemmaReport:
    """Monte-Carlo ``E||z||^2`` over uniform permutations.

    The bound is evaluated with ``G = G* + 2DL`` in both terms, with
    ``D = G*/(2L)`` (start at the minimizer), so ``G = 2G*``. The stricter
    variant with ``G*`` in both terms is reported in ``stats``.
    """
    if q is None:
        q = random_centered_quadratic(np.random.default_rng(seed), n, d)
    n, d = q.n, q.d
    L = float(max(np.max(np.abs(np.linalg.eigvalsh(Ai))) for Ai in q.A))
    params = {"n": n, "d": d, "alpha": alpha, "L": L, "seed": seed}
    if alpha > 1.0 / L * (1 + 1e-12):
        return _unmet("zmoment", params, "alpha > 1/L")
    if n < 2:
        return _unmet("zmoment", params, "needs n >= 2")
    g_star = float(np.max(np.linalg.norm(q.b, axis=1)))
    G = 2 * g_star
    prng = Xoshiro256(seed)
    sq = np.empty(trials)
    for t in range(trials):
        z = flipflop_bias_z(q, shuffle(prng, n), alpha)
        sq[t] = z @ z
    mean = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = z_moment_bound(n, alpha, L, g_star, G)
    strict = z_moment_bound(n, alpha, L, g_star, g_star)
    stats = {"mean_sq_z": mean, "std_err": se, "bound": bound, "bound_strict_gstar": strict,
             "strict_holds": bool(mean <= strict + 3 * se), "g_star": g_star, "G": G}
    notes = ["G = G* + 2DL used in both terms (conservative reading)"]
    return _finish("zmoment", trials, [bound + 3 * se - mean], params, stats, notes)


def check_bounded_iterates(fs, trajectories, x0s, stats_list) -> tuple[list[float], dict[str, float]]:
    """Margins of ``||x - x*|| <= 2D`` and ``||grad f_j(x)|| <= G* + 2DL`` over all iterates."""
    margins: list[float] = []
    worst_ratio_x, worst_ratio_g = 0.0, 0.0
    for traj, st in zip(trajectories, stats_list):
        if traj.iterates is None:
            raise ContractError("trajectory lacks full iterates; run with record='all_iterates'")
        xs = st.minimizer
        gcap = st.g_star + 2 * st.D * st.L
        pts = np.concatenate(traj.iterates, axis=0)
        dist = np.linalg.norm(pts - xs, axis=1)
        gn = max(float(np.max(np.linalg.norm(np.array([fs.grad(j, p) for j in range(fs.n)]), axis=1)))
                 for p in pts)
        margins.append(2 * st.D * (1 + 1e-12) - float(dist.max()))
        margins.append(gcap * (1 + 1e-12) - gn)
        worst_ratio_x = max(worst_ratio_x, float(dist.max()) / (2 * st.D))
        worst_ratio_g = max(worst_ratio_g, gn / gcap)
    return margins, {"max_dist_over_2D": worst_ratio_x, "max_grad_over_G": worst_ratio_g}


_ALL_STRATEGIES = ("igd", "ss", "rr", "ff-igd", "ff-ss", "ff-rr")


def verify_bounded_iterates(trials: int = 100, n: int = 5, d: int = 3, K: int = 10, mu: float = 0.5,
                            L: float = 1.0, alpha_scale: float = 0.99, seed: int = 0) -> LemmaReport:
    """Every iterate of every strategy stays within ``2D`` of the minimizer.

    ``alpha = alpha_scale / (8 kappa n L)``; ``alpha_scale >= 1`` is outside
    the hypothesis. Runs cycle through IGD, SS, RR and their FlipFlop forms.
    """
    kappa = L / mu
    alpha = alpha_scale / (8 * kappa * n * L)
    params = {"n": n, "d": d, "K": K, "mu": mu, "L": L, "alpha": alpha, "seed": seed}
    if alpha_scale >= 1.0:
        return _unmet("bounded", params, "alpha must be < 1/(8 kappa n L)")
    rng = np.random.default_rng(seed)
    margins: list[float] = []
    worst = {"max_dist_over_2D": 0.0, "max_grad_over_G": 0.0}
    for t in range(trials):
        q = QuadraticSum.dense(sample_psd_components(rng, n, d, mu, L), rng.standard_normal((n, d)))
        st0 = instance_stats(q)
        direction = rng.standard_normal(d)
        x0 = st0.minimizer + direction / np.linalg.norm(direction) * rng.uniform(0.0, 3.0)
        st = instance_stats(q, x0)
        # the lemma's kappa uses the instance's own mu and L
        if alpha >= 1 / (8 * st.kappa * n * st.L):
            continue
        label = _ALL_STRATEGIES[t % len(_ALL_STRATEGIES)]
        traj = run(q, make_strategy(label, n, seed + t), RunConfig(alpha, K, x0, record="all_iterates"))
        m, w = check_bounded_iterates(q, [traj], [x0], [st])
        margins.extend(m)
        for key in worst:
            worst[key] = max(worst[key], w[key])
    checked = len(margins) // 2
    return _finish("bounded", checked, margins, params, dict(worst, runs_checked=checked))
