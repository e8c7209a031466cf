"""End-to-end acceptance checks.

Each test prints one ``criterion N: PASS|FAIL`` line with the measured
numbers. Run directly (``python3 tests/test_acceptance.py``) for just the
summary lines.
"""

import math
import time

import numpy as np
import pytest

from permlab.analysis import (
    classify_decay,
    random_centered_quadratic,
    verify_amgm_matrix,
    verify_bounded_iterates,
    verify_coupling,
    verify_prefix_sums,
    verify_z_moment,
)
from permlab.cli import ExperimentConfig, run_experiment
from permlab.engine import (
    RunConfig,
    compose_maps,
    epoch_affine_map,
    flipflop_bias_z,
    run,
    sgd_epoch,
)
from permlab.instances import gen_hessian_smooth_1d, gen_lower_bound_f1, gen_thm3_pair, initial_point
from permlab.problems import QuadraticSum, StepSizeRule, instance_stats
from permlab.schedulers import Permutation, make_strategy
from permlab.search import enumerate_endpoints, greedy_sequence_run

pytestmark = pytest.mark.slow

RESULTS: dict[int, str] = {}


def report(num: int, ok: bool, detail: str, capsys=None) -> None:
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[num] = line
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)


def _table(summary):
    return {(t["algo"], t["K"]): t["median"] for t in summary["table"]}


# 1 -------------------------------------------------------------- mean computation

def check_mean_computation_slopes(capsys=None):
    t0 = time.time()
    cfg = ExperimentConfig(instance={"kind": "mean_computation", "n": 800, "d": 100, "seed": 1},
                           algos=["ss", "ff-ss", "rr", "ff-rr", "igd", "ff-igd"],
                           K_grid=[8, 16, 32, 64, 128, 256], repeats=10, step="auto:1.5", seed=7)
    _, summary = run_experiment(cfg)
    slopes = {a: summary["fits"][a]["slope"] for a in cfg.algos}
    targets = {"rr": -3.0, "ff-rr": -5.0, "ss": -2.0, "ff-ss": -4.0}
    in_band = all(abs(slopes[a] - t) <= 0.7 for a, t in targets.items())
    med = _table(summary)
    dominated = all(med[("ff-" + a, K)] < med[(a, K)] for a in ("ss", "rr") for K in cfg.K_grid if K >= 32)
    ok = in_band and dominated
    detail = ", ".join(f"{a}={slopes[a]:.2f}" for a in cfg.algos)
    report(1, ok, f"slopes {detail}; FF below plain at K>=32: {dominated}; {time.time() - t0:.1f}s", capsys)
    return ok


# 2 -------------------------------------------------------------- FF-IGD on igd_hard

def check_igd_hard(capsys=None):
    t0 = time.time()
    cfg = ExperimentConfig(instance={"kind": "igd_hard", "n": 64}, algos=["igd", "ff-igd"],
                           K_grid=[8, 16, 32, 64, 128, 256], repeats=1, step="auto", seed=0)
    _, summary = run_experiment(cfg)
    s_igd = summary["fits"]["igd"]["slope"]
    s_ff = summary["fits"]["ff-igd"]["slope"]
    ok = abs(s_igd + 2) <= 0.7 and abs(s_ff + 3) <= 0.7
    report(2, ok, f"IGD slope {s_igd:.2f} (target -2), FF-IGD slope {s_ff:.2f} (target -3); "
                  f"{time.time() - t0:.1f}s", capsys)
    return ok


# 3 -------------------------------------------------------------- greedy vs RR, 1-D

def check_greedy_exponential(capsys=None):
    t0 = time.time()
    f = gen_hessian_smooth_1d(n=4, seed=0, eps=0.3)
    x0 = initial_point(f)
    st = instance_stats(f, x0)
    alpha = StepSizeRule("thm1_1d").resolve(4, 1, st.mu, st.L, st.L_H, st.G)
    greedy = greedy_sequence_run(f, x0, alpha, 60, window_start=5)
    g = greedy.classification
    Ks = [32, 64, 128, 256, 512, 1024, 2048]
    meds = []
    for K in Ks:
        a = StepSizeRule("thm5_rr").resolve(4, K, st.mu, st.L)
        meds.append(float(np.median([run(f, make_strategy("rr", 4, s), RunConfig(a, K, x0)).sq_errors[-1]
                                     for s in range(10)])))
    r = classify_decay(Ks, meds)
    ok = st.kappa <= 4 and g.label == "exponential" and g.exp.r_squared >= 0.95 and r.label == "polynomial"
    # context: at the same fixed step and window RR also contracts geometrically
    fixed = run(f, make_strategy("rr", 4, 0), RunConfig(alpha, 60, x0)).sq_errors
    k = np.arange(1, 61)
    rf = classify_decay(k[k >= 5], fixed[k >= 5])
    report(3, ok, f"kappa {st.kappa:.2f}, alpha {alpha:.4g}; greedy epochs 5..60: {g.label} "
                  f"(exp R2 {g.exp.r_squared:.4f}, rate {g.exp.slope:.3f}/epoch); RR over K in {Ks[0]}..{Ks[-1]} "
                  f"with the decaying step rule: {r.label} (slope {r.poly.slope:.2f}, R2 {r.poly.r_squared:.3f}); "
                  f"note: RR at the fixed greedy step on epochs 5..60 is {rf.label} "
                  f"(rate {rf.exp.slope:.3f}/epoch); {time.time() - t0:.1f}s", capsys)
    return ok


# 4 -------------------------------------------------------------- universal lower bound

def check_thm3_exhaustive(capsys=None):
    t0 = time.time()
    f = gen_thm3_pair(1.0)
    K, L = 12, 1.0
    worst = math.inf
    for alpha in (1 / (K * L), 1 / (2 * K * L), 0.9 / L):
        ends = enumerate_endpoints(f, [1.0], alpha, K)[:, 0]
        c = (1 - alpha * L) ** K
        bound = c / L + alpha / 2 * (1 - c)
        worst = min(worst, float(ends.min() - bound))
    ok = worst >= -1e-12
    report(4, ok, f"min over 2^12 sequences minus bound, worst over alpha grid: {worst:.3e}; "
                  f"{time.time() - t0:.1f}s", capsys)
    return ok


# 5 -------------------------------------------------------------- pair-sum accumulation

def pair_sum_bound(n: int, K: int, alpha: float, L: float, factor: float = 1.0) -> float:
    c = 1 - alpha * L
    return factor * alpha**2 * L * c ** (n - 1) * (1 - c ** ((n - 1) * K)) / (1 - c ** (n - 1))


def check_f1_pair_sums(capsys=None):
    t0 = time.time()
    n, L = 4, 1.0
    q = gen_lower_bound_f1(n, L)
    worst_pair = worst_sq = math.inf
    literal_fail = None
    for K in (1, 2, 3):
        for alpha in np.geomspace(1 / (2 * (n - 1) * K * L), 3 / (n * L), 12):
            ends = enumerate_endpoints(q, np.zeros(n), float(alpha), K)
            pairs = ends[:, 0::2] + ends[:, 1::2]
            B = pair_sum_bound(n, K, alpha, L)
            worst_pair = min(worst_pair, float(pairs.min() / B - 1))
            sq = np.sum(ends**2, axis=1)
            worst_sq = min(worst_sq, float(sq.min() / (n * B**2 / 4) - 1))
            if literal_fail is None and pairs.min() < pair_sum_bound(n, K, alpha, L, 2.0):
                literal_fail = (K, float(alpha), float(pairs.min()), pair_sum_bound(n, K, alpha, L, 2.0))
    ok = worst_pair >= -1e-12 and worst_sq >= -1e-12
    lit = ("literal factor-2 constant holds everywhere" if literal_fail is None else
           "informational: the factor-2 constant fails, e.g. K={} alpha={:.4g}: min pair sum {:.4g} < {:.4g}"
           .format(*literal_fail))
    report(5, ok, f"pair sums >= a^2 L c^(n-1)(1-c^((n-1)K))/(1-c^(n-1)) (min ratio-1 {worst_pair:.3e}); "
                  f"squared error >= n B^2/4 (min ratio-1 {worst_sq:.3e}); {lit}; "
                  f"{time.time() - t0:.1f}s", capsys)
    return ok


# 6 -------------------------------------------------------------- lemma suite

def check_lemmas(capsys=None):
    t0 = time.time()
    reps = [verify_amgm_matrix(trials=1000, seed=0),
            verify_coupling(trials=500, family="quadratic", seed=0),
            verify_coupling(trials=500, family="logcosh", seed=1),
            verify_prefix_sums(trials=100_000, seed=0),
            verify_z_moment(trials=10_000, seed=0),
            verify_bounded_iterates(trials=100, seed=0)]
    ok = all(r.status == "pass" and r.violations == 0 for r in reps)
    ok = ok and reps[-1].stats["runs_checked"] == 100
    parts = [f"{r.lemma}{'/' + r.parameters['family'] if 'family' in r.parameters else ''}: "
             f"{r.status} ({r.trials} trials, {r.violations} violations)" for r in reps]
    report(6, ok, "; ".join(parts) + f"; {time.time() - t0:.1f}s", capsys)
    return ok


# 7 -------------------------------------------------------------- engine equivalences

def check_engine_equivalences(capsys=None):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst_map = worst_z = 0.0
    for t in range(200):
        n, d = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        q = random_centered_quadratic(rng, n, d)
        alpha = float(rng.uniform(0.01, 1.0))
        perms = make_strategy("rr", n, t).sequence(3)
        x0 = rng.standard_normal(d)
        sim = x0
        for p in perms:
            sim = sgd_epoch(q, sim, p, alpha)
        mapped = compose_maps([epoch_affine_map(q, p, alpha) for p in perms]).apply(x0)
        worst_map = max(worst_map, float(np.linalg.norm(sim - mapped) / max(np.linalg.norm(sim), 1e-300)))
        z = flipflop_bias_z(q, perms[0], alpha)
        pair = epoch_affine_map(q, perms[0], alpha).then(epoch_affine_map(q, perms[0].reverse(), alpha))
        for _ in range(3):
            x = rng.standard_normal(d)
            two = sgd_epoch(q, sgd_epoch(q, x, perms[0], alpha), perms[0].reverse(), alpha)
            worst_z = max(worst_z, float(np.linalg.norm(two - (pair.M @ x + z)) / max(np.linalg.norm(two), 1e-300)))
        zero_start = sgd_epoch(q, sgd_epoch(q, np.zeros(d), perms[0], alpha), perms[0].reverse(), alpha)
        worst_z = max(worst_z, float(np.linalg.norm(zero_start - z) / max(np.linalg.norm(z), 1e-300)))
    ok = worst_map <= 1e-12 and worst_z <= 1e-12
    report(7, ok, f"200 instances: max relative gap map vs simulation {worst_map:.2e}, "
                  f"z identity {worst_z:.2e}; {time.time() - t0:.1f}s", capsys)
    return ok


# 8 -------------------------------------------------------------- logistic ordering

def check_logistic(capsys=None):
    t0 = time.time()
    cfg = ExperimentConfig(instance={"kind": "logistic_1d", "n": 800, "seed": 0},
                           algos=["ss", "ff-ss", "rr", "ff-rr"], K_grid=[128], repeats=10,
                           step="auto:1.5", seed=5)
    _, summary = run_experiment(cfg)
    med = _table(summary)
    ok = med[("ff-ss", 128)] < med[("ss", 128)] and med[("ff-rr", 128)] < med[("rr", 128)]
    report(8, ok, "median error at K=128: " + ", ".join(f"{a}={med[(a, 128)]:.3e}" for a in cfg.algos)
           + f"; {time.time() - t0:.1f}s", capsys)
    return ok


CHECKS = [check_mean_computation_slopes, check_igd_hard, check_greedy_exponential, check_thm3_exhaustive,
          check_f1_pair_sums, check_lemmas, check_engine_equivalences, check_logistic]


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i + 1}" for i in range(len(CHECKS))])
def test_criterion(check, capsys):
    assert check(capsys)


def test_literal_pair_sum_constant_counterexample():
    # documents that twice the accumulated increment is not a valid lower bound
    n, L, K, alpha = 4, 1.0, 2, 1 / 12
    ends = enumerate_endpoints(gen_lower_bound_f1(n, L), np.zeros(n), alpha, K)
    pairs = ends[:, 0::2] + ends[:, 1::2]
    assert pairs.min() >= pair_sum_bound(n, K, alpha, L)
    assert pairs.min() < pair_sum_bound(n, K, alpha, L, 2.0)


if __name__ == "__main__":
    results = [c() for c in CHECKS]
    print(f"{sum(results)}/{len(results)} criteria passed")
