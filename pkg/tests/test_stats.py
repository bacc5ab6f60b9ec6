import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mfmarket.stats import (
    BootstrapConfig,
    ReturnSeries,
    TailWarning,
    autocorrelation,
    ccdf,
    classify_tail,
    hill_curve,
    hill_gamma,
    log_returns,
    lognormal_fit,
    normalize,
    optimal_k,
    rolling_volatility,
    structure_functions,
    survival,
    tail_slope,
)


def pareto(alpha, n, seed):
    return np.random.default_rng(seed).pareto(alpha, n) + 1.0


finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestReturns:
    def test_exact_logs(self):
        r = log_returns([1.0, math.e, math.e ** 2], 1)
        np.testing.assert_allclose(r.values, [1.0, 1.0], rtol=1e-15)
        assert r.delta_t == 1 and not r.normalized

    def test_constant(self):
        assert np.all(log_returns(np.full(10, 3.3)).values == 0)

    def test_lag_two(self):
        np.testing.assert_allclose(log_returns([1, 2, 4, 8], 2).values, [math.log(4)] * 2, rtol=1e-15)

    @pytest.mark.parametrize("prices,dt", [([1, 0, 2], 1), ([1, -1, 2], 1), ([1, 2], 2), ([1, 2, 3], 0)])
    def test_rejects(self, prices, dt):
        with pytest.raises(ValueError):
            log_returns(prices, dt)


class TestNormalize:
    def test_zero_variance(self):
        with pytest.raises(ValueError):
            normalize(ReturnSeries(np.ones(5), 1))

    @given(arrays(float, st.integers(2, 200), elements=finite))
    def test_standardized_and_idempotent(self, x):
        if np.ptp(x) < 1e-6 * max(1.0, np.abs(x).max()):
            return
        z = normalize(ReturnSeries(x, 1))
        assert z.normalized
        assert abs(z.values.mean()) < 1e-10
        assert z.values.std(ddof=1) == pytest.approx(1.0, rel=1e-10)
        np.testing.assert_allclose(normalize(z).values, z.values, atol=1e-12)


def test_normalize_pair_values():
    # sample sd of [-1, 1] with n-1 denominator is sqrt(2), so the pair maps to -+1/sqrt(2)
    expected = np.array([-1.0, 1.0]) / math.sqrt(2)
    np.testing.assert_allclose(normalize(ReturnSeries(np.array([-1.0, 1.0]), 1)).values, expected, rtol=1e-14)
    np.testing.assert_allclose(normalize(ReturnSeries(np.array([0.0, 2.0]), 1)).values, expected, rtol=1e-14)


class TestRollingVolatility:
    def test_constant(self):
        assert np.all(rolling_volatility(np.full(50, 0.7), 10) == 0)

    def test_alternating(self):
        x = np.array([1.0, -1.0] * 20)
        np.testing.assert_allclose(rolling_volatility(x, 2), math.sqrt(2), rtol=1e-15)
        assert len(rolling_volatility(x, 2)) == 39

    def test_gaussian_mean(self):
        x = np.random.default_rng(3).standard_normal(200_000)
        assert rolling_volatility(x, 100).mean() == pytest.approx(1.0, abs=0.02)

    def test_matches_direct(self):
        x = np.random.default_rng(4).standard_normal(500)
        v = rolling_volatility(x, 7)
        assert v[123] == pytest.approx(x[123:130].std(ddof=1), rel=1e-13)

    def test_rejects(self):
        with pytest.raises(ValueError):
            rolling_volatility(np.ones(5), 6)
        with pytest.raises(ValueError):
            rolling_volatility(np.ones(5), 1)


class TestCcdf:
    def test_counting(self):
        s = [1, 2, 3]
        np.testing.assert_allclose(survival(s, [0.5, 1, 2]), [1, 2 / 3, 1 / 3])
        x, p = ccdf(s)
        np.testing.assert_array_equal(x, [1, 2, 3])
        np.testing.assert_allclose(p, [1, 2 / 3, 1 / 3])

    def test_single(self):
        np.testing.assert_array_equal(survival([5], [4, 5]), [1, 0])
        x, p = ccdf([5])
        assert list(x) == [5] and list(p) == [1]

    def test_pareto_slope(self):
        assert tail_slope(pareto(3, 100_000, 1)) == pytest.approx(-3.0, abs=0.15)

    @given(arrays(float, st.integers(1, 300), elements=finite))
    def test_monotone(self, s):
        x, p = ccdf(s)
        assert np.all(np.diff(x) > 0)
        assert np.all(np.diff(p) < 0)
        assert p[0] == 1.0 and np.all(p > 0)


class TestHill:
    def test_hand_value(self):
        assert hill_gamma([math.e, math.e, math.e ** 2], 1) == pytest.approx(1.0, rel=1e-15)

    def test_all_equal_flagged(self):
        with pytest.warns(TailWarning):
            assert hill_gamma(np.full(10, 2.5), 3) == 0.0

    def test_pareto(self):
        assert hill_gamma(pareto(3, 1_000_000, 2), 1000) == pytest.approx(1 / 3, abs=0.05)

    def test_consistency_improves(self):
        errs = []
        for n in (10_000, 1_000_000):
            x = pareto(3, n, 7)
            errs.append(abs(1 / hill_gamma(x, int(math.sqrt(n))) - 3))
        assert errs[1] < errs[0]

    def test_insufficient(self):
        with pytest.raises(ValueError):
            hill_gamma([1.0, 2.0, -3.0], 2)
        with pytest.raises(ValueError):
            hill_gamma([1.0, 2.0], 0)

    @settings(max_examples=50)
    @given(arrays(float, st.integers(5, 200), elements=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3)),
           st.integers(1, 3))
    def test_tail_sign_symmetry(self, x, k):
        if np.count_nonzero(x > 0) < k + 1:
            return
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TailWarning)
            assert hill_gamma(-x, k, "negative") == hill_gamma(x, k, "positive")

    def test_curve_matches_pointwise(self):
        x = pareto(2, 5000, 3)
        ks = [5, 50, 500]
        np.testing.assert_allclose(hill_curve(x, ks), [hill_gamma(x, k) for k in ks], rtol=1e-14)
        assert np.isnan(hill_curve(x, [5000]))[0]


class TestOptimalK:
    @pytest.mark.parametrize("alpha", [2.0, 3.0, 4.0])
    def test_pareto_recovery(self, alpha):
        est = optimal_k(pareto(alpha, 100_000, int(alpha * 10)))
        assert est.alpha == pytest.approx(alpha, rel=0.07)
        assert est.plateau
        assert est.alpha == 1 / est.gamma
        assert 1 <= est.k < est.n

    def test_pareto_window(self):
        est = optimal_k(pareto(3, 100_000, 99))
        assert 2.8 <= est.alpha <= 3.2

    def test_exponential_no_plateau(self):
        est = optimal_k(np.random.default_rng(5).exponential(size=100_000))
        assert not est.plateau
        assert est.plateau_drift > BootstrapConfig().plateau_tol

    def test_diagnostics_table(self):
        cfg = BootstrapConfig(n_boot=20, grid_points=30)
        est = optimal_k(pareto(3, 20_000, 1), cfg=cfg)
        ks = est.k_diagnostics[:, 0]
        assert ks[0] == 10 and ks[-1] == 2000
        assert len(ks) <= 30
        assert est.k in ks

    def test_negative_tail(self):
        x = -pareto(3, 50_000, 4)
        est = optimal_k(x, "negative", BootstrapConfig(n_boot=20))
        assert est.alpha == pytest.approx(3.0, rel=0.1)
        assert est.tail_sign == "negative"

    def test_reproducible(self):
        x = pareto(3, 20_000, 5)
        cfg = BootstrapConfig(n_boot=10, seed=3)
        assert optimal_k(x, cfg=cfg).k_diagnostics.tobytes() == optimal_k(x, cfg=cfg).k_diagnostics.tobytes()

    def test_small_sample_warns(self):
        with pytest.warns(TailWarning):
            optimal_k(pareto(3, 500, 6), cfg=BootstrapConfig(n_boot=5))

    def test_no_tail(self):
        with pytest.raises(ValueError):
            optimal_k(-np.abs(pareto(3, 2000, 1)))


class TestAutocorrelation:
    def test_white_noise(self):
        x = np.random.default_rng(8).standard_normal(50_000)
        res = autocorrelation(x, 100)
        assert np.mean(np.abs(res.acf) < res.noise_band) >= 0.95
        assert res.noise_band == pytest.approx(1.96 / math.sqrt(50_000))

    def test_periodic(self):
        x = np.array([1.0, -1.0] * 100)
        res = autocorrelation(x, 10)
        assert res.acf[1] == pytest.approx(1.0, abs=0.02)  # lag 2; the biased estimator scales by (T-2)/T
        assert res.acf[0] == pytest.approx(-1.0, abs=0.01)

    def test_bounds(self):
        x = np.random.default_rng(9).standard_normal(1000).cumsum()
        res = autocorrelation(x, 50)
        assert np.all(np.abs(res.acf) <= 1)
        assert len(res.robust_band) == 50

    def test_rejects(self):
        with pytest.raises(ValueError):
            autocorrelation(np.ones(100), 5)
        with pytest.raises(ValueError):
            autocorrelation(np.arange(100.0), 25)


@pytest.fixture(scope="module")
def brownian():
    inc = np.random.default_rng(10).standard_normal(2_000_000) * 0.01
    return np.exp(np.concatenate([[0.0], np.cumsum(inc)]))


class TestStructureFunctions:

    def test_monofractal(self, brownian):
        mf = structure_functions(brownian, [1, 2, 3, 4])
        np.testing.assert_allclose(mf.zeta, [0.5, 1.0, 1.5, 2.0], atol=0.05)
        assert np.all(mf.fit_r2 > 0.99)
        value, err = mf.nonlinearity()
        assert abs(value) < 0.05

    def test_zeroth_moment(self, brownian):
        mf = structure_functions(brownian[:20_000], [0, 1], [1, 10, 100, 1000])
        np.testing.assert_array_equal(mf.moments[0], 1.0)
        assert mf.zeta[0] == 0.0

    def test_monotone_in_d(self, brownian):
        mf = structure_functions(brownian[:200_000], [1, 2, 3])
        assert np.all(np.diff(mf.moments, axis=1) > 0)

    def test_rejects(self, brownian):
        with pytest.raises(ValueError):
            structure_functions(brownian[:1000], [], [1, 2])
        with pytest.raises(ValueError):
            structure_functions(brownian[:1000], [1], [])
        with pytest.raises(ValueError):
            structure_functions(brownian[:1000], [1], [1, 500])


class TestLogNormal:
    def test_recovery(self):
        x = np.random.default_rng(11).lognormal(0.0, 1.0, 100_000)
        fit = lognormal_fit(x)
        assert -0.02 <= fit.mu_ln <= 0.02
        assert 0.98 <= fit.sigma_ln <= 1.02
        assert fit.ks_distance < 0.01

    def test_constant_rejected(self):
        with pytest.raises(ValueError):
            lognormal_fit(np.full(100, 2.0))

    def test_non_positive_rejected(self):
        with pytest.raises(ValueError):
            lognormal_fit([1.0, 0.0, 2.0])


class TestClassifier:
    def test_regimes(self):
        rng = np.random.default_rng(12)
        assert classify_tail(rng.exponential(size=40_000)).regime == "exponential"
        assert classify_tail(rng.standard_normal(40_000)).regime == "exponential"
        assert classify_tail(pareto(3, 40_000, 13)).is_power_law
        assert classify_tail(-pareto(2, 40_000, 14)).is_power_law
