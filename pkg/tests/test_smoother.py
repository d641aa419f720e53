import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strattreat import ObservationSet, SmootherConfig, fit_conditional_mean, fit_propensity, make_dgp, stratify
from strattreat.errors import BandwidthError, ConfigError, DimensionMismatch, EmptyArm, SeparationError
from strattreat.simulation import random_sample
from strattreat.smoother import fit_logit, kernel_regression, silverman_bandwidth


def _linear_data(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 1))
    d = (rng.random(n) < 0.5).astype(int)
    y = 1.0 + 2.0 * x[:, 0] + 0.1 * rng.standard_normal(n)
    return ObservationSet(y=y, d=d, x=x)


class TestKernelMean:
    @pytest.mark.parametrize("kind", ["nadaraya_watson", "local_linear"])
    def test_constant_outcome(self, kind):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(200, 2))
        data = ObservationSet(y=np.full(200, 3.5), d=np.arange(200) % 2, x=x)
        fit = fit_conditional_mean(data, 1, config=SmootherConfig(kind=kind))
        np.testing.assert_allclose(fit.predict(rng.normal(size=(30, 2))), 3.5, atol=1e-12)

    def test_local_linear_recovers_line(self):
        data = _linear_data()
        fit = fit_conditional_mean(data, 0, config=SmootherConfig(kind="local_linear"))
        q = np.linspace(-1.5, 1.5, 31)
        assert np.max(np.abs(fit.predict(q) - (1.0 + 2.0 * q))) < 0.05

    def test_single_training_point(self):
        data = ObservationSet(y=[4.0, 7.0], d=[1, 0], x=[[0.0], [1.0]])
        fit = fit_conditional_mean(data, 1)
        np.testing.assert_allclose(fit.predict([[-3.0], [0.0], [5.0]]), 4.0)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=40), st.floats(0.05, 3.0))
    def test_nadaraya_watson_convex_hull(self, ys, h):
        y = np.array(ys)
        r = np.linspace(0, 1, y.size).reshape(-1, 1)
        out = kernel_regression(np.linspace(-0.5, 1.5, 25).reshape(-1, 1), r, y, np.array([h]), False)
        assert np.all(out >= y.min() - 1e-9) and np.all(out <= y.max() + 1e-9)

    def test_predict_is_deterministic(self):
        data = _linear_data(500)
        fit = fit_conditional_mean(data, 1, config=SmootherConfig(kind="local_linear"))
        q = np.linspace(-2, 2, 17)
        assert np.array_equal(fit.predict(q), fit.predict(q.copy()))

    def test_empty_query(self):
        fit = fit_conditional_mean(_linear_data(100), 1)
        assert fit.predict(np.empty((0, 1))).shape == (0,)

    def test_dimension_mismatch(self):
        fit = fit_conditional_mean(_linear_data(100), 1)
        with pytest.raises(DimensionMismatch):
            fit.predict(np.zeros((3, 2)))

    @pytest.mark.parametrize("bandwidth", [0.0, -1.0, float("nan")])
    def test_bad_bandwidth(self, bandwidth):
        with pytest.raises(BandwidthError):
            fit_conditional_mean(_linear_data(100), 1, bandwidth=bandwidth)
        with pytest.raises(BandwidthError):
            SmootherConfig(bandwidth=bandwidth)

    def test_bad_bandwidth_scale(self):
        with pytest.raises(BandwidthError):
            SmootherConfig(bandwidth_scale=0.0)

    def test_empty_arm(self):
        data = ObservationSet(y=[1.0, 2.0], d=[1, 1], x=[[0.0], [1.0]])
        with pytest.raises(EmptyArm):
            fit_conditional_mean(data, 0)

    def test_silverman(self):
        r = np.array([[0.0], [1.0], [2.0], [3.0]])
        expected = 1.06 * np.std(r[:, 0], ddof=1) * 4 ** -0.2
        assert silverman_bandwidth(r)[0] == pytest.approx(expected)
        assert silverman_bandwidth(np.ones((5, 1)))[0] == 1.0

    def test_bandwidth_scale(self):
        data = _linear_data(300)
        base = fit_conditional_mean(data, 1)
        wide = fit_conditional_mean(data, 1, config=SmootherConfig(bandwidth_scale=2.5))
        assert wide.bandwidth[0] == pytest.approx(2.5 * base.bandwidth[0])

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            SmootherConfig(kind="spline")

    def test_fitted_propensity_regressor(self):
        draw = stratify(make_dgp("a"), 1000, 0.8, seed=4)
        ps_fit = fit_propensity(draw.data)
        fit = fit_conditional_mean(draw.data, 1, "fitted_propensity", ps_fit)
        assert fit.predict(draw.data.x[:5]).shape == (5,)
        with pytest.raises(ConfigError):
            fit_conditional_mean(draw.data, 1, "fitted_propensity")


class TestPropensity:
    def test_logit_recovers_coefficients(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(20_000, 1))
        d = (rng.random(20_000) < 1 / (1 + np.exp(-(0.3 + 1.2 * x[:, 0])))).astype(int)
        fit = fit_propensity(ObservationSet(y=np.zeros(20_000), d=d, x=x))
        assert fit.converged
        np.testing.assert_allclose(fit.coefficients, [0.3, 1.2], atol=0.06)

    def test_no_covariates_gives_treated_fraction(self):
        data = ObservationSet(y=np.zeros(10), d=[1] * 7 + [0] * 3, x=np.empty((10, 0)))
        np.testing.assert_allclose(fit_propensity(data).predict(np.empty((4, 0))), 0.7)

    def test_separation(self):
        x = np.linspace(-1, 1, 40).reshape(-1, 1)
        data = ObservationSet(y=np.zeros(40), d=(x[:, 0] > 0).astype(int), x=x)
        with pytest.raises(SeparationError):
            fit_propensity(data)

    def test_fit_logit_singular(self):
        with pytest.raises(SeparationError):
            fit_logit(np.ones((10, 1)), np.arange(10) % 2)

    def test_kernel_propensity_in_unit_interval(self):
        data = _linear_data(400)
        fit = fit_propensity(data, SmootherConfig(propensity="kernel"))
        p = fit.predict(np.linspace(-3, 3, 13))
        assert np.all((p > 0) & (p < 1))

    def test_series_logit(self):
        draw = stratify(make_dgp("a"), 2000, 0.8, seed=9)
        fit = fit_propensity(draw.data, SmootherConfig(logit_degree=2))
        assert fit.coefficients.shape == (3,)
        assert np.all(np.isfinite(fit.predict(draw.data.x)))


class TestStratificationInvariance:
    def test_cate_same_under_stratified_and_random_sampling(self):
        # stratifying on D leaves E[Y | D, X] unchanged, so both samples estimate one CATE
        spec = make_dgp("a")
        config = SmootherConfig(kind="local_linear")
        q = np.linspace(-1.0, 1.0, 9)
        cates = []
        for draw in (stratify(spec, 20_000, 0.8, seed=1), random_sample(spec, 20_000, seed=2)):
            m1 = fit_conditional_mean(draw.data, 1, config=config).predict(q)
            m0 = fit_conditional_mean(draw.data, 0, config=config).predict(q)
            cates.append(m1 - m0)
        np.testing.assert_allclose(cates[0], 1.0 + q, atol=0.06)
        np.testing.assert_allclose(cates[0], cates[1], atol=0.08)
