import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from growthseg.errors import (
    CapacityCollapseError,
    DegenerateDesignError,
    NonPositiveGrowthError,
)
from growthseg.growth import (
    doubling_time,
    fit_exponential,
    fit_exponential_xy,
    fit_logistic,
    growth_rate,
    logistic_log_mean,
    predict,
)
from growthseg.simulate import SimSpec, simulate

from conftest import make_log_series


class TestExponential:
    def test_noiseless_recovery(self):
        t = np.arange(0, 40)
        s = make_log_series(2.0 + 0.05 * t)
        fit = fit_exponential(s)
        assert fit.intercept == pytest.approx(2.0, abs=1e-10)
        assert fit.rate == pytest.approx(0.05, abs=1e-10)
        assert fit.resid_var == pytest.approx(0.0, abs=1e-10)

    def test_monte_carlo_unbiased(self):
        # 200 replicates at the magnitudes used throughout: the mean of the
        # estimated rates must sit within +-0.002 of the generating 0.041
        rates = []
        for seed in range(200):
            spec = SimSpec(
                model="exponential", t0=1670, t_end=1670 + 349, intercept=4.0,
                slopes=(0.041,), noise_sd=0.19, seed=seed,
            )
            panel, _ = simulate(spec)
            rates.append(fit_exponential(panel.extract("sim")).rate)
        assert np.mean(rates) == pytest.approx(0.041, abs=0.002)

    def test_shift_equivariance(self):
        t = np.arange(0, 60)
        rng = np.random.default_rng(3)
        y = 1.5 + 0.04 * t + rng.normal(0, 0.1, t.size)
        base = fit_exponential_xy(t, y, 0)
        shifted = fit_exponential_xy(t - 10, y, 10)
        assert shifted.rate == pytest.approx(base.rate, abs=1e-10)
        assert shifted.resid_var == pytest.approx(base.resid_var, abs=1e-10)
        assert shifted.intercept == pytest.approx(base.intercept + base.rate * 10, abs=1e-8)

    def test_scale_equivariance(self):
        t = np.arange(0, 60)
        rng = np.random.default_rng(4)
        y = 1.5 + 0.04 * t + rng.normal(0, 0.1, t.size)
        base = fit_exponential_xy(t, y, 0)
        scaled = fit_exponential_xy(t, y + math.log(7.0), 0)
        assert scaled.rate == pytest.approx(base.rate, abs=1e-12)
        assert scaled.intercept == pytest.approx(base.intercept + math.log(7.0), abs=1e-10)

    def test_degenerate_design(self):
        with pytest.raises(DegenerateDesignError):
            fit_exponential_xy(np.zeros(5), np.arange(5.0), 0)

    def test_loglik_matches_direct_formula(self):
        t = np.arange(0, 30)
        rng = np.random.default_rng(5)
        y = 1.0 + 0.02 * t + rng.normal(0, 0.2, t.size)
        fit = fit_exponential_xy(t, y, 0)
        n = t.size
        direct = -0.5 * n * (math.log(2 * math.pi * fit.resid_var) + 1.0)
        assert fit.loglik == pytest.approx(direct, rel=1e-12)


class TestLogistic:
    def test_noiseless_recovery(self):
        t = np.arange(0, 250)
        s = make_log_series(logistic_log_mean(t, 1.0, 0.06, 8.0))
        fit = fit_logistic(s)
        assert fit.intercept == pytest.approx(1.0, rel=1e-6)
        assert fit.rate == pytest.approx(0.06, rel=1e-6)
        assert fit.log_capacity == pytest.approx(8.0, rel=1e-6)

    def test_approaches_capacity(self):
        fit_params = (1.0, 0.06, 8.0)
        t_far = math.log(2e6) / 0.06  # e^{-b1 t} = 5e-7 < 1e-6 here
        value = logistic_log_mean(np.array([t_far]), *fit_params)[0]
        assert value == pytest.approx(8.0, abs=1e-3)

    def test_predictor_increasing(self):
        t = np.arange(0, 300)
        vals = logistic_log_mean(t, 1.0, 0.05, 9.0)
        assert np.all(np.diff(vals) > 0)

    def test_collapse_reported_on_decreasing_data(self):
        # shrinking totals force the capacity down onto the initial volume,
        # which must be reported rather than returned as a flat fit
        t = np.arange(0, 60)
        s = make_log_series(5.0 - 0.05 * t)
        with pytest.raises(CapacityCollapseError):
            fit_logistic(s)

    def test_recovery_with_noise(self):
        rng = np.random.default_rng(11)
        t = np.arange(0, 250)
        y = logistic_log_mean(t, 1.0, 0.06, 8.0) + rng.normal(0, 0.1, t.size)
        fit = fit_logistic(make_log_series(y))
        assert fit.rate == pytest.approx(0.06, abs=0.01)
        assert fit.log_capacity == pytest.approx(8.0, abs=0.2)


class TestPredict:
    def test_exponential_intercept(self):
        s = make_log_series(2.0 + 0.05 * np.arange(20))
        fit = fit_exponential(s)
        assert predict(fit, 0) == pytest.approx(2.0, abs=1e-9)
        assert predict(fit, 10) == pytest.approx(2.5, abs=1e-9)

    def test_logistic_at_zero(self):
        t = np.arange(0, 200)
        fit = fit_logistic(make_log_series(logistic_log_mean(t, 1.0, 0.06, 8.0)))
        assert predict(fit, 0) == pytest.approx(1.0, abs=1e-6)


class TestRates:
    def test_growth_rate_examples(self):
        assert growth_rate(0.05) == pytest.approx(0.051, abs=5e-4)
        assert growth_rate(0.0) == 0.0
        assert growth_rate(math.log(2)) == pytest.approx(1.0, abs=1e-12)

    def test_doubling_examples(self):
        assert doubling_time(0.0410) == pytest.approx(17.25, abs=0.01)
        assert doubling_time(1.0) == pytest.approx(1.0, abs=1e-12)
        assert doubling_time(0.0287) == pytest.approx(24.50, abs=0.01)

    def test_nonpositive_growth(self):
        with pytest.raises(NonPositiveGrowthError):
            doubling_time(0.0)
        with pytest.raises(NonPositiveGrowthError):
            doubling_time(-0.1)

    @given(st.floats(1e-6, 2.0))
    def test_doubling_of_growth_rate_identity(self, b1):
        # ln(1 + (e^b1 - 1)) collapses to b1 exactly
        assert doubling_time(growth_rate(b1)) == pytest.approx(
            math.log(2.0) / b1, abs=1e-12, rel=1e-12
        )
