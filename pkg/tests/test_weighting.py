import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strattreat import (
    ObservationSet,
    StratificationInfo,
    arm_weights,
    fit_propensity,
    make_dgp,
    population_propensity,
    sample_propensity,
    smoothed_weight,
    strat_weights,
    stratify,
)
from strattreat.errors import ConfigError, DomainError, OverlapViolation
from strattreat.weighting import enforce_overlap, overlap_flags, weights_report

fractions = st.floats(min_value=0.01, max_value=0.99)


class TestArmWeights:
    def test_values(self):
        w1, w0 = arm_weights(StratificationInfo.known(0.5, 0.8))
        assert w1 == pytest.approx(0.625)
        assert w0 == pytest.approx(2.5)

    @given(fractions)
    def test_exactly_one_at_pi_star(self, pi):
        assert arm_weights(StratificationInfo.known(pi, pi)) == (1.0, 1.0)

    def test_sample_mean_one_under_exact_counts(self):
        draw = stratify(make_dgp("a"), 1000, 0.8, seed=11)
        assert strat_weights(draw.data, draw.info).mean == pytest.approx(1.0, abs=1e-14)


class TestPropensityMaps:
    def test_docstring_value(self):
        assert population_propensity(0.5, StratificationInfo.known(0.2, 0.5)) == pytest.approx(0.2)

    @settings(max_examples=200)
    @given(fractions, fractions, st.floats(min_value=1e-6, max_value=1 - 1e-6))
    def test_round_trip(self, pi, pi_star, v):
        info = StratificationInfo.known(pi, pi_star)
        assert population_propensity(sample_propensity(v, info), info) == pytest.approx(v, abs=1e-12)
        assert sample_propensity(population_propensity(v, info), info) == pytest.approx(v, abs=1e-12)

    @given(fractions, fractions)
    def test_monotone(self, pi, pi_star):
        info = StratificationInfo.known(pi, pi_star)
        v = np.linspace(0.001, 0.999, 200)
        assert np.all(np.diff(population_propensity(v, info)) > 0)

    def test_oversampled_treated_lowers_propensity(self):
        info = StratificationInfo.known(0.5, 0.8)
        assert population_propensity(0.6, info) < 0.6

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            population_propensity(bad, StratificationInfo.known(0.5, 0.8))


class TestSmoothedWeight:
    @given(fractions, fractions, st.floats(min_value=0.0, max_value=1.0))
    def test_between_arm_weights(self, pi, pi_star, p):
        info = StratificationInfo.known(pi, pi_star)
        w1, w0 = arm_weights(info)
        w = float(smoothed_weight(p, info))
        assert min(w1, w0) - 1e-12 <= w <= max(w1, w0) + 1e-12

    def test_stratified_mean_is_one(self):
        # E*[w(X)] = 1: averaging the true sample propensity over the stratified covariate law
        spec = make_dgp("a")
        draw = stratify(spec, 200_000, 0.8, seed=5)
        info = draw.info
        x = draw.data.x[:, 0]
        ps = sample_propensity(1 / (1 + np.exp(-x)), info)
        assert smoothed_weight(ps, info).mean() == pytest.approx(1.0, abs=0.01)

    def test_from_fit(self):
        draw = stratify(make_dgp("a"), 500, 0.8, seed=2)
        sw = strat_weights(draw.data, draw.info, fit_propensity(draw.data))
        assert sw.w_of_x.shape == (500,)


class TestOverlap:
    def test_flags(self):
        p = np.array([0.005, 0.5, 0.995])
        np.testing.assert_array_equal(overlap_flags(p, 0.01), [True, False, True])
        np.testing.assert_array_equal(overlap_flags(p, 0.01, sides="upper"), [False, False, True])

    def test_error_policy(self):
        with pytest.raises(OverlapViolation, match="1 of 3"):
            enforce_overlap(np.array([0.5, 0.5, 0.999]), 0.01)

    def test_drop_policy(self):
        keep = enforce_overlap(np.array([0.5, 0.5, 0.999]), 0.01, "drop")
        np.testing.assert_array_equal(keep, [True, True, False])

    def test_drop_everything(self):
        with pytest.raises(OverlapViolation):
            enforce_overlap(np.array([0.999, 0.001]), 0.01, "drop")

    @pytest.mark.parametrize("eps", [-0.1, 0.5, 0.7])
    def test_bad_eps(self, eps):
        with pytest.raises(ConfigError):
            overlap_flags(np.array([0.5]), eps)

    def test_report(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(300, 1))
        d = (rng.random(300) < 1 / (1 + np.exp(-x[:, 0]))).astype(int)
        data = ObservationSet(y=np.zeros(300), d=d, x=x)
        info = StratificationInfo.known(0.5, 0.6)
        rep = weights_report(data, info, fit_propensity(data))
        assert rep["w_treated"] == pytest.approx(0.5 / 0.6)
        assert rep["trim"]["n_flagged"] == rep["trim"]["n_flagged_low"] + rep["trim"]["n_flagged_high"]
        lo, hi = rep["w_of_x_range"]
        assert math.isfinite(lo) and lo <= hi
