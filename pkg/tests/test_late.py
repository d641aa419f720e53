import math

import numpy as np
import pytest

from strattreat import ObservationSet, StratificationInfo, estimate_late, make_dgp, stratify, wald_naive, wald_reweighted
from strattreat.errors import MissingInstrument, WeakFirstStage


def _iv_data(n=2000, seed=0, compliance=True):
    rng = np.random.default_rng(seed)
    z = (rng.random(n) < 0.5).astype(int)
    d = z.copy() if compliance else np.where(rng.random(n) < 0.6, z, 1 - z)
    y = 0.5 + 1.5 * d + rng.standard_normal(n)
    return ObservationSet(y=y, d=d, x=np.empty((n, 0)), z=z)


class TestWald:
    def test_perfect_compliance_is_difference_in_means(self):
        data = _iv_data()
        diff = data.y[data.z == 1].mean() - data.y[data.z == 0].mean()
        assert wald_naive(data).beta == pytest.approx(diff, abs=1e-12)

    def test_reduction_at_pi_star(self):
        data = stratify(make_dgp("b"), 1000, 0.7, seed=3).data
        assert wald_reweighted(data, StratificationInfo.known(0.7, 0.7)).beta == wald_naive(data).beta

    def test_constant_instrument(self):
        data = ObservationSet(y=[1.0, 2.0, 3.0], d=[0, 1, 1], x=np.empty((3, 0)), z=[1, 1, 1])
        with pytest.raises(WeakFirstStage):
            wald_naive(data)

    def test_missing_instrument(self):
        data = ObservationSet(y=[1.0, 2.0], d=[0, 1], x=np.empty((2, 0)))
        with pytest.raises(MissingInstrument):
            wald_naive(data)

    @pytest.mark.parametrize("a, b", [(0.0, 3.0), (10.0, 1.0), (-2.0, -0.5)])
    def test_affine_equivariance(self, a, b):
        data = _iv_data(compliance=False)
        info = StratificationInfo.known(0.4, data.treated_fraction)
        moved = ObservationSet(y=a + b * data.y, d=data.d, x=data.x, z=data.z)
        assert wald_reweighted(moved, info).beta == pytest.approx(b * wald_reweighted(data, info).beta, rel=1e-10)

    def test_reweighting_on_design_b(self):
        spec = make_dgp("b")
        draw = stratify(spec, 200_000, 0.7, seed=12)
        assert wald_reweighted(draw.data, draw.info).beta == pytest.approx(2.0, abs=0.05)
        assert wald_naive(draw.data).beta == pytest.approx(5293 / 2079, abs=0.05)


class TestLateInference:
    def test_matches_difference_in_means_se(self):
        data = _iv_data(4000, seed=1)
        est = estimate_late(data, StratificationInfo.known(0.5, 0.5), reweighted=False)
        y1, y0 = data.y[data.z == 1], data.y[data.z == 0]
        se = math.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size)
        assert est.se == pytest.approx(se, rel=0.15)

    def test_se_halves_with_four_times_n(self):
        spec = make_dgp("b")
        ses = []
        for n, seed in ((4000, 1), (16000, 2)):
            draw = stratify(spec, n, 0.7, seed=seed)
            ses.append(estimate_late(draw.data, draw.info).se)
        assert ses[1] / ses[0] == pytest.approx(0.5, abs=0.05)

    def test_zero_residual_gives_zero_se(self):
        z = np.array([0, 0, 1, 1, 0, 1])
        d = np.array([0, 1, 1, 1, 0, 0])
        data = ObservationSet(y=2.0 + 3.0 * d, d=d, x=np.empty((6, 0)), z=z)
        est = estimate_late(data, StratificationInfo.known(0.3, 0.5))
        assert est.point == pytest.approx(3.0)
        assert est.se == pytest.approx(0.0, abs=1e-12)
        assert est.ci_low == pytest.approx(est.ci_high)

    def test_metadata(self):
        draw = stratify(make_dgp("b"), 1000, 0.7, seed=0)
        est = estimate_late(draw.data, draw.info)
        assert est.method == "late_wald_reweighted"
        assert est.metadata["se_method"] == "weighted_gmm_sandwich"
        assert abs(est.influence.mean()) < 1e-10
