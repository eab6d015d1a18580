import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unidecon.dist import SeedSpec, degenerate, empirical, sample_fixed, truncated_exponential, uniform
from unidecon.errors import ConfigurationError, DegenerateLikelihoodError, DomainError
from unidecon.mc import (
    CHERNOFF_VARIANCE,
    FIGURE_GRID,
    SimConfig,
    an_bn_diagnostics,
    an_bn_terms,
    bn_mixed_term,
    c_E_fixed,
    c_E_mixed,
    chernoff_variance,
    fit_mle,
    loglog_slope,
    scaled_variance,
    simulate_variance_curve,
    theory_curve_conjecture,
    theory_curve_fixed_plugin,
    theory_curve_mixed,
)
from unidecon.mle import StepDistribution, icm_solve_fixed

GRID = np.array(FIGURE_GRID)
# (1/2)^{2/3} * 0.263555964
CONJ_UNIFORM_T1 = 0.166029853434468
# c_E = int_{1/2}^{1} 4/e^2 de + int_1^{3/2} 4/e de = 4 + 4 log(3/2) (F0 clamps at 1 above 2)
CE_UNIFORM_MIXED = 4 + 4 * math.log(1.5)


def test_chernoff_constant():
    assert chernoff_variance() == 0.263555964
    assert chernoff_variance() > 0


def test_c_E_fixed_examples():
    assert c_E_fixed(uniform(0, 2), 1.0) == 4.0
    F0 = truncated_exponential()
    p = F0.cdf
    assert c_E_fixed(F0, 0.5) == pytest.approx(1 / p(0.5) + 1 / (p(1.5) - p(0.5)), abs=1e-10)


@given(st.floats(0.01, 0.99))
def test_c_E_fixed_reduces_when_support_in_unit_interval(t):
    F0 = truncated_exponential(upper=1.0)
    p = F0.cdf(t)
    assert c_E_fixed(F0, t) == pytest.approx(1 / (p * (1 - p)), rel=1e-12)


def test_c_E_fixed_infinite_at_edge():
    with pytest.warns(UserWarning):
        assert c_E_fixed(uniform(0, 2), 0.0) == math.inf


def test_c_E_mixed_degenerate_equals_fixed():
    F0 = truncated_exponential()
    for t in GRID:
        assert abs(c_E_mixed(F0, degenerate(1.0), t) - c_E_fixed(F0, t)) < 1e-12


def test_c_E_mixed_uniform_oracle():
    mpmath.mp.dps = 25
    F0 = uniform(0, 2)

    def F(x):
        return min(max(x, 0), 2) / 2

    ref = mpmath.quad(lambda e: (1 / (F(1) - F(1 - e)) + 1 / (F(1 + e) - F(1))) / e, [0.5, 1, 1.5])
    assert abs(float(ref) - CE_UNIFORM_MIXED) < 1e-15
    assert c_E_mixed(F0, uniform(0.5, 1.5), 1.0) == pytest.approx(CE_UNIFORM_MIXED, abs=1e-10)


def test_c_E_mixed_empirical_is_a_weighted_sum():
    F0 = truncated_exponential()
    FE = empirical([0.7, 1.3], [0.4, 0.6])
    t = 0.8
    p = F0.cdf

    def term(e):
        return (1 / (p(t) - p(t - e)) + 1 / (p(t + e) - p(t))) / e

    assert c_E_mixed(F0, FE, t) == pytest.approx(0.4 * term(0.7) + 0.6 * term(1.3), rel=1e-14)


def test_c_E_mixed_divergence_flagged():
    with pytest.warns(UserWarning, match="infinite"):
        assert c_E_mixed(uniform(0, 2), uniform(0.5, 1.5), 2.0) == math.inf
    with pytest.raises(ConfigurationError):
        c_E_mixed(uniform(0, 2), uniform(0.0, 1.0), 1.0)


def test_theory_curve_values():
    U = uniform(0, 2)
    assert theory_curve_conjecture(U, [1.0])[0] == pytest.approx(CONJ_UNIFORM_T1, abs=1e-15)
    assert theory_curve_conjecture(U, [0.0, 2.0]).tolist() == [0.0, 0.0]
    expected = (2 / CE_UNIFORM_MIXED) ** (2 / 3) * CHERNOFF_VARIANCE
    assert theory_curve_mixed(U, uniform(0.5, 1.5), [1.0])[0] == pytest.approx(expected, rel=1e-10)


def test_theory_curves_touch_at_one_for_uniform():
    U = uniform(0, 2)
    assert theory_curve_conjecture(U, [1.0])[0] == theory_curve_mixed(U, degenerate(1.0), [1.0])[0]


def test_uniform_curve_symmetric():
    U = uniform(0, 2)
    np.testing.assert_allclose(theory_curve_conjecture(U, GRID), theory_curve_conjecture(U, GRID[::-1]), atol=1e-15)


def test_degenerate_mixed_curve_equals_fixed_plugin():
    F0 = truncated_exponential()
    np.testing.assert_allclose(theory_curve_mixed(F0, degenerate(1.0), GRID),
                               theory_curve_fixed_plugin(F0, GRID), rtol=1e-12)


def test_curves_coincide_in_unit_regime():
    F0 = truncated_exponential(upper=1.0)
    g = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(theory_curve_mixed(F0, degenerate(1.0), g), theory_curve_conjecture(F0, g), rtol=1e-12)


# -- simulation --------------------------------------------------------------------------


def test_sim_config_validation():
    F0 = truncated_exponential()
    with pytest.raises(ConfigurationError):
        SimConfig("fixed", F0, 10, 0)
    with pytest.raises(ConfigurationError):
        SimConfig("fixed", F0, 10, 5, grid=[0.0, 1.0])
    with pytest.raises(ConfigurationError):
        SimConfig("fixed", F0, 10, 5, grid=[1.0, 2.0])
    with pytest.raises(ConfigurationError):
        SimConfig("mixed", F0, 10, 5)
    with pytest.raises(ConfigurationError):
        SimConfig("other", F0, 10, 5)
    assert SimConfig("fixed", F0, 10, 5).grid.size == 19


def test_two_replications_give_two_point_variance():
    cfg = SimConfig("fixed", truncated_exponential(), 40, 2, grid=[0.5, 1.0], master_seed=4)
    vc = simulate_variance_curve(cfg)
    a, b = vc.estimates
    np.testing.assert_allclose(vc.empirical_scaled_var, 40 ** (2 / 3) * (a - b) ** 2 / 2, rtol=1e-14)
    assert vc.failures == 0 and vc.successes == 2


def test_simulation_deterministic_and_worker_independent():
    cfg = SimConfig("mixed", truncated_exponential(), 100, 12, FE=uniform(0.5, 1.5), master_seed=9)
    a = simulate_variance_curve(cfg)
    b = simulate_variance_curve(cfg, workers=3)
    np.testing.assert_array_equal(a.empirical_scaled_var, b.empirical_scaled_var)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    assert a.t.size == 19 and np.all(a.empirical_scaled_var >= 0)


def test_replication_order_irrelevant():
    rng = np.random.default_rng(0)
    vals = rng.random((30, 4))
    np.testing.assert_allclose(scaled_variance(vals, 50), scaled_variance(vals[rng.permutation(30)], 50), rtol=1e-12)


def test_failures_counted_and_flagged(monkeypatch):
    import unidecon.mc as mc

    real = mc.fit_mle
    calls = {"k": 0}

    def flaky(obs, F0=None, cfg=None):
        calls["k"] += 1
        if calls["k"] % 5 == 0:
            raise DegenerateLikelihoodError("injected")
        return real(obs, F0, cfg)

    monkeypatch.setattr(mc, "fit_mle", flaky)
    cfg = SimConfig("fixed", truncated_exponential(), 50, 10, master_seed=1)
    with pytest.warns(UserWarning, match="2 of 10"):
        vc = simulate_variance_curve(cfg)
    assert vc.failures == 2 and vc.successes == 8 and vc.flagged


def test_fit_mle_routes_to_pava_in_unit_regime():
    F0 = truncated_exponential(upper=1.0)
    obs = sample_fixed(F0, 100, SeedSpec(3))
    a = fit_mle(obs, F0)
    b = icm_solve_fixed(obs).estimate
    np.testing.assert_allclose(b(a.points), a.values, atol=1e-6)


# -- A_n / B_n ---------------------------------------------------------------------------------


def _midpoint_terms(F, F0, t0, length, k=200_000):
    s = t0 + (np.arange(k) + 0.5) * length / k
    d1 = F(s) - F(s - 1)
    d2 = F(s + 1) - F(s)
    A = -np.sum((F(s) - F0.cdf(s)) * (1 / d1 + 1 / d2)) * length / k
    B = np.sum((F(s - 1) - F0.cdf(s - 1)) / d1 + (F(s + 1) - F0.cdf(s + 1)) / d2) * length / k
    Y = np.sum((F0.cdf(s) - F0.cdf(s - 1)) / d1 - (F0.cdf(s + 1) - F0.cdf(s)) / d2) * length / k
    return A, B, Y


def test_an_bn_terms_against_midpoint_rule():
    F0 = truncated_exponential()
    est = icm_solve_fixed(sample_fixed(F0, 2000, SeedSpec(6))).estimate
    for t0, length in [(0.5, 0.08), (1.3, 0.1), (0.95, 0.1)]:
        A, B = an_bn_terms(est, F0, t0, length)
        mA, mB, mY = _midpoint_terms(est, F0, t0, length)
        assert A == pytest.approx(mA, rel=1e-4, abs=1e-9)
        assert B == pytest.approx(mB, rel=1e-4, abs=1e-9)
        # Y = A + B identically
        assert A + B == pytest.approx(mY, rel=1e-4, abs=1e-9)


def test_an_nonpositive_when_estimate_dominates():
    F0 = truncated_exponential()
    pts = np.linspace(0, 2, 201)
    upper = StepDistribution(pts, F0.cdf(pts + 0.01))
    A, _ = an_bn_terms(upper, F0, 0.5, 0.2)
    assert A <= 0


def test_bn_vanishes_in_unit_regime():
    F0 = uniform(0, 1)
    pts = np.linspace(0.01, 1, 100)
    est = StepDistribution(pts, F0.cdf(pts))
    _, B = an_bn_terms(est, F0, 0.5, 0.1)
    assert abs(B) < 1e-15


def test_an_bn_denominator_collapse():
    est = StepDistribution([0.2, 0.9], [0.5, 1.0])
    with pytest.raises(DegenerateLikelihoodError):
        an_bn_terms(est, truncated_exponential(), 1.0, 0.3)


def test_bn_mixed_term_runs():
    F0 = truncated_exponential()
    est = icm_solve_fixed(sample_fixed(F0, 500, SeedSpec(6))).estimate
    assert math.isfinite(bn_mixed_term(est, F0, uniform(0.5, 1.5), 0.5, 0.1))


def test_loglog_slope_exact():
    n = np.array([100, 200, 400, 800])
    assert loglog_slope(n, 3.0 * n ** (-2 / 3)) == pytest.approx(-2 / 3, abs=1e-12)


def test_an_bn_diagnostics_small_run():
    rd = an_bn_diagnostics(truncated_exponential(), [100, 400], 0.5, R=8, seed=2)
    assert rd.median_abs_An.shape == (2,) and np.all(rd.skipped == 0)
    assert rd.fitted_slope_Bn < 0
    with pytest.raises(DomainError):
        an_bn_diagnostics(truncated_exponential(), [100], 2.5, R=2)
    with pytest.raises(DomainError):
        an_bn_diagnostics(truncated_exponential(), [100], 0.5, t_offset=0.0, R=2)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_theory_curves_positive_inside(seed):
    rng = np.random.default_rng(seed)
    F0 = truncated_exponential(upper=2.0, rate=float(rng.uniform(0.2, 3)))
    g = np.sort(rng.uniform(0.05, 1.95, 5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert np.all(theory_curve_conjecture(F0, g) > 0)
        assert np.all(theory_curve_mixed(F0, uniform(0.5, 1.5), g) > 0)
