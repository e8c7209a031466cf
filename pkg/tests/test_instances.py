import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from permlab.engine import run_sequence, sgd_epoch
from permlab.instances import (
    GENERATORS,
    POPULATION_LOGISTIC_MINIMIZER,
    from_json,
    gen_hessian_smooth_1d,
    gen_igd_hard,
    gen_logistic_1d,
    gen_lower_bound_combined,
    gen_lower_bound_f1,
    gen_lower_bound_f2,
    gen_lower_bound_f3,
    gen_mean_computation,
    gen_thm3_pair,
    initial_point,
    to_json,
)
from permlab.problems import ContractError, QuadraticSum, full_gradient, gradient, instance_stats
from permlab.schedulers import Permutation


def test_mean_computation_minimizer_is_mean():
    q = gen_mean_computation(800, 100, seed=3)
    s = instance_stats(q)
    pts = np.random.default_rng(3).standard_normal((800, 100))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    assert np.allclose(s.minimizer, pts.mean(axis=0), atol=1e-15)
    assert s.mu == s.L == 2.0


@given(st.integers(2, 4).map(lambda h: 2 * h), st.floats(0.05, 0.9), st.integers(0, 10_000))
def test_f1_single_epoch_formula(n, aL, seed):
    L = 1.0
    alpha = aL / L
    q = gen_lower_bound_f1(n, L)
    rng = np.random.default_rng(seed)
    perm = Permutation(rng.permutation(n))
    x0 = rng.standard_normal(n)
    x = sgd_epoch(q, x0, perm, alpha)
    pos = {int(c): t + 1 for t, c in enumerate(perm.order)}
    c = 1 - alpha * L
    h = n // 2
    for i in range(h):
        p, r = pos[i], pos[h + i]  # f_i and g_i
        xi, yi = 2 * i, 2 * i + 1
        if p < r:
            expect = c ** (n - 1) * x0[xi] + c ** (n - p - 1) * alpha - c ** (n - r) * alpha
            assert x[xi] == pytest.approx(expect, abs=1e-13)
        else:
            expect = c ** (n - 1) * x0[yi] + c ** (n - r - 1) * alpha - c ** (n - p) * alpha
            assert x[yi] == pytest.approx(expect, abs=1e-13)


def test_f1_rejects_odd_n():
    with pytest.raises(ContractError):
        gen_lower_bound_f1(5)


def test_f1_stats_and_gradient():
    q = gen_lower_bound_f1(6, 2.0)
    s = instance_stats(q)
    assert s.mu == pytest.approx(5 / 6 * 2.0) and np.allclose(s.minimizer, 0.0)
    assert np.array_equal(full_gradient(q, np.zeros(6)), np.zeros(6))


def test_f2_last_scheduled_coordinate():
    n, L, alpha = 5, 1.0, 0.07
    q = gen_lower_bound_f2(n, L)
    perm = Permutation([3, 0, 4, 1, 2])  # component 3 (0-based 2) goes last
    y0 = np.random.default_rng(0).standard_normal(n)
    y = sgd_epoch(q, y0, perm, alpha)
    c = 1 - alpha * L
    geo = sum(c**m for m in range(n - 1))
    assert y[2] == pytest.approx(c ** (n - 1) * y0[2] - alpha / (n - 1) * geo + alpha, abs=1e-14)
    assert instance_stats(q).mu == pytest.approx((n - 1) * L / n)


@given(st.floats(0.0, 2.0), st.integers(1, 5), st.integers(1, 4))
def test_f3_power_closed_form(aL, n, K):
    L = 1.0
    q = gen_lower_bound_f3(L, n)
    t = run_sequence(q, [Permutation.identity(n)] * K, [1.0], aL / L, [0.0])
    assert t.final_x[0] == pytest.approx((1 - 2 * aL) ** (n * K), rel=1e-12, abs=1e-300)


def test_f3_special_steps():
    q = gen_lower_bound_f3(1.0, 3)
    assert sgd_epoch(q, [1.0], [0, 1, 2], 0.5)[0] == 0.0
    assert abs(sgd_epoch(q, [1.0], [0, 1, 2], 1.0)[0]) >= 1.0


def test_combined_instance():
    n, L = 4, 1.0
    q = gen_lower_bound_combined(n, L)
    assert q.d == 2 * n + 1
    s = instance_stats(q)
    assert np.allclose(s.minimizer, 0.0)
    assert (n - 1) * L / n - 1e-12 <= s.mu <= L <= 2 * L + 1e-12
    assert np.array_equal(initial_point(q), [0.0] * 8 + [1.0])


def test_igd_hard_is_combined_family():
    q = gen_igd_hard(8)
    assert q.kind == "igd_hard" and q.d == 17


def test_thm3_pair():
    q = gen_thm3_pair(1.0)
    assert full_gradient(q, [0.0])[0] == 0.0
    assert q.diag[1, 0] < 0
    s = instance_stats(q)
    assert s.mu == pytest.approx(0.25) and s.L == pytest.approx(1.0)


@given(st.floats(0.01, 1.0))
def test_thm3_pair_epoch_lower_recursion(alpha):
    q = gen_thm3_pair(1.0)
    x = 1.0
    for p in ([0, 1], [1, 0]):
        nxt = sgd_epoch(q, [x], p, alpha)[0]
        assert nxt >= (1 - alpha) * x + alpha**2 / 2 - 1e-15


def test_logistic_instance():
    f = gen_logistic_1d(800, seed=0)
    assert set(np.unique(f.z)) <= {-1.0, 1.0}
    g = [gradient(f, i, [0.0])[0] for i in (1, 2, 3)]
    assert all(abs(abs(v) - 0.5) < 1e-15 for v in g)
    xs = instance_stats(f).minimizer[0]
    assert abs(full_gradient(f, [xs])[0]) < 1e-14
    # independent Newton oracle on the empirical loss
    x = 0.0
    for _ in range(60):
        h = 1 / (1 + np.exp(-x * f.z))
        g1 = float(np.mean((h - f.y) * f.z))
        g2 = float(np.mean(h * (1 - h)))
        x -= g1 / g2
    assert xs == pytest.approx(x, abs=1e-12)
    assert abs(xs - POPULATION_LOGISTIC_MINIMIZER) < 4 / math.sqrt(800)
    assert POPULATION_LOGISTIC_MINIMIZER == pytest.approx(-1.0986, abs=1e-4)


def test_logistic_seed_determinism():
    a, b = gen_logistic_1d(50, 4), gen_logistic_1d(50, 4)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.z, b.z)


def test_hessian_smooth_family():
    f = gen_hessian_smooth_1d(n=4, seed=1, eps=0.3)
    s = instance_stats(f)
    assert s.L_H == pytest.approx(0.3 * 4 / (3 * math.sqrt(3)))
    assert s.kappa <= 4
    assert abs(full_gradient(f, s.minimizer)[0]) < 1e-13
    assert initial_point(f)[0] == pytest.approx(s.minimizer[0] + 1.0)


def test_json_inline_quadratic_dense_and_flat():
    A = [[[2.0, 0.0], [0.0, 1.0]], [[1.0, 0.5], [0.5, 1.0]]]
    b = [[1.0, 0.0], [-1.0, 0.0]]
    q1 = from_json({"kind": "quadratic", "n": 2, "d": 2, "A": A, "b": b})
    q2 = from_json({"kind": "quadratic", "n": 2, "d": 2,
                    "A": [sum(m, []) for m in A], "b": b})
    assert np.array_equal(q1.A, q2.A)
    back = from_json(json.loads(json.dumps(to_json(q1))))
    assert np.array_equal(back.A, q1.A) and np.array_equal(back.b, q1.b)


def test_json_diag_and_x0():
    q = from_json({"kind": "quadratic", "n": 2, "d": 1, "diag": [[1], [1]], "b": [[1], [-1]], "x0": [0.5]})
    assert isinstance(q, QuadraticSum) and q.is_diagonal
    assert initial_point(q)[0] == 0.5
    assert to_json(q)["diag"] == [[1.0], [1.0]]


@pytest.mark.parametrize("kind,params", [
    ("mean_computation", {"n": 10, "d": 3, "seed": 2}),
    ("lb_f1", {"n": 4}),
    ("lb_combined", {"n": 4, "L": 2.0}),
    ("thm3_pair", {"L": 1.0}),
    ("logistic_1d", {"n": 20, "seed": 1}),
    ("hessian_smooth_1d", {"n": 4, "seed": 3}),
])
def test_json_named_generators_round_trip(kind, params):
    fs = from_json({"kind": kind, **params})
    again = from_json(to_json(fs))
    assert type(again) is type(fs)
    x = np.full(fs.d, 0.3)
    assert np.array_equal(full_gradient(fs, x), full_gradient(again, x))


def test_json_errors():
    for bad in ({}, {"kind": "nope"}, {"kind": "quadratic", "n": 1, "d": 1, "b": [[0]]},
                {"kind": "lb_f1", "n": 4, "bogus": 1}):
        with pytest.raises(ContractError):
            from_json(bad)
    assert set(GENERATORS) >= {"mean_computation", "igd_hard", "logistic_1d"}
