import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from permlab.analysis import (
    amgm_alpha_bound,
    classify_decay,
    compare_models,
    fit_exp_rate,
    fit_poly_rate,
    random_centered_quadratic,
    sample_psd_components,
    verify_amgm_matrix,
    verify_bounded_iterates,
    verify_coupling,
    verify_prefix_sums,
    verify_z_moment,
)
from permlab.problems import QuadraticSum

Ks = np.array([8, 16, 32, 64, 128, 256])


def test_exact_power_law():
    fit = fit_poly_rate(Ks, 7.0 / Ks**2, burn_in=0)
    assert fit.slope == pytest.approx(-2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(7.0), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_exact_exponential():
    k = np.arange(1, 30)
    fit = fit_exp_rate(k, np.exp(-0.3 * k), burn_in=0)
    assert fit.slope == pytest.approx(-0.3, abs=1e-12)
    assert compare_models(k, np.exp(-0.3 * k)).model == "exp"


def test_constant_series_fits_zero_slope():
    fit = fit_poly_rate(Ks, np.full(6, 0.5), burn_in=0)
    assert fit.slope == pytest.approx(0.0, abs=1e-15)
    assert classify_decay(Ks, np.full(6, 0.5)).label == "flat"


def test_burn_in_drops_leading_points():
    fit = fit_poly_rate(Ks, 1.0 / Ks**3, burn_in=0.25)
    assert fit.k_range[0] == 32 and fit.n_points == 4


@given(st.floats(-5.0, -0.5), st.floats(0.1, 100.0))
def test_power_law_recovered(slope, c):
    fit = fit_poly_rate(Ks, c * Ks.astype(float) ** slope, burn_in=0)
    assert fit.slope == pytest.approx(slope, abs=1e-9)


def test_classify_poly_vs_exp():
    k = np.arange(5, 200, dtype=float)
    assert classify_decay(k, k**-3.0).label == "polynomial"
    assert classify_decay(k, np.exp(-0.1 * k)).label == "exponential"


def test_amgm_scalar_case():
    # all A_i = mu I, n = 2: the product is (1 - alpha mu)^4 I
    mu, alpha = 1.0, 0.01
    assert (1 - alpha * mu) ** 4 <= 1 - 2 * alpha * mu


def test_amgm_small_run_and_unmet():
    rep = verify_amgm_matrix(trials=50, seed=1)
    assert rep.status == "pass" and rep.violations == 0
    assert rep.stats["max_norm"] <= rep.stats["bound"]
    bad = verify_amgm_matrix(trials=10, alpha=1.0)
    assert bad.status == "hypothesis unmet" and bad.violations == 0
    with pytest.raises(ValueError):
        verify_amgm_matrix(trials=1, mu=2.0, L=1.0)


def test_psd_sampler_spectra():
    rng = np.random.default_rng(0)
    A = sample_psd_components(rng, 5, 4, 1.0, 10.0)
    ev = np.linalg.eigvalsh(A)
    assert ev.min() >= -1e-12 and ev.max() <= 10.0 + 1e-12
    assert np.linalg.eigvalsh(A.mean(axis=0))[0] >= 1.0 - 1e-12
    assert amgm_alpha_bound(4, 1.0, 10.0) == pytest.approx(min(2, math.sqrt(10) / 4) / 800)


def test_coupling_equal_starts_stay_equal():
    from permlab.analysis import _random_scalar_family
    fs = _random_scalar_family(np.random.default_rng(0), 4, 0.3)
    x = np.array([0.4])
    for p in ([0, 1, 2, 3], [3, 1, 0, 2]):
        assert fs.epoch(x, p, 0.01)[0] == fs.epoch(x.copy(), p, 0.01)[0]


@pytest.mark.parametrize("family", ["quadratic", "logcosh"])
def test_coupling_reports(family):
    rep = verify_coupling(trials=60, family=family, seed=2)
    assert rep.passed and rep.status == "pass"
    assert rep.stats["max_ratio_to_upper"] <= 1.0 + 1e-12
    assert verify_coupling(trials=5, alpha_scale=2.0).status == "hypothesis unmet"


def test_prefix_full_sum_is_zero_and_first_is_exact():
    rng = np.random.default_rng(3)
    q = random_centered_quadratic(rng, 10, 3)
    alpha = 0.01
    rep = verify_prefix_sums(trials=4000, q=q, alpha=alpha, seed=3)
    assert rep.passed
    assert rep.stats["last_prefix_max"] <= 1e-28
    exact_first = float(np.mean(np.sum((alpha * q.b) ** 2, axis=1)))
    assert rep.stats["mean_sq"][0] == pytest.approx(exact_first, rel=0.1)
    assert exact_first <= rep.stats["bound"][0]


def test_prefix_uncentered_is_unmet():
    q = QuadraticSum.diagonal(np.ones((3, 1)), np.ones((3, 1)))
    assert verify_prefix_sums(trials=10, q=q).status == "hypothesis unmet"


def test_z_moment_zero_b():
    q = QuadraticSum.diagonal(np.ones((4, 2)), np.zeros((4, 2)))
    rep = verify_z_moment(trials=20, q=q)
    assert rep.stats["mean_sq_z"] == 0.0 and rep.passed


def test_z_moment_alpha_scaling():
    q = random_centered_quadratic(np.random.default_rng(9), 6, 2)
    r1 = verify_z_moment(trials=2000, q=q, alpha=0.02, seed=1)
    r2 = verify_z_moment(trials=2000, q=q, alpha=0.01, seed=1)
    assert r1.passed and r2.passed
    ratio = r1.stats["mean_sq_z"] / r2.stats["mean_sq_z"]
    assert 12.0 < ratio < 20.0


def test_z_moment_step_too_large():
    q = random_centered_quadratic(np.random.default_rng(9), 6, 2)
    assert verify_z_moment(trials=5, q=q, alpha=10.0).status == "hypothesis unmet"


def test_bounded_iterates_small_and_unmet():
    rep = verify_bounded_iterates(trials=12, seed=4)
    assert rep.passed and rep.stats["runs_checked"] == 12
    assert verify_bounded_iterates(trials=3, alpha_scale=1.5).status == "hypothesis unmet"


def test_report_json_round_trip():
    import json
    rep = verify_amgm_matrix(trials=3)
    d = json.loads(rep.to_json())
    assert d["lemma"] == "amgm" and d["passed"] is True and d["trials"] == 3
