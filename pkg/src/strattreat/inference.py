"""Influence functions, asymptotic variance formulas and normal confidence intervals.

The ATE influence function of the reweighted estimators (covariate or
propensity conditioning) has three parts:

main
    ``w_D * (mu1(X) - mu0(X)) - beta``, the reweighted CATE deviation.
adjust_firststage
    ``w(X) * (D (Y - mu1) / ps - (1 - D) (Y - mu0) / (1 - ps))``, the
    correction for estimating the arm regressions.
adjust_pistar
    ``A * (D - pi_star)`` with ``A = E*[dw(X)/dpi_star * (mu1 - mu0)]``,
    present only when ``pi_star`` is estimated by ``mean(d)``.

Sample analogs of the adjustment terms are centred, so every influence
vector has mean zero up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import FloatArray, ObservationSet, PiStarMode, StratificationInfo
from .errors import DomainError, OverlapViolation
from .firststage import OutcomeFits
from .weighting import arm_weights, smoothed_weight

ADJUST_LIMIT = 1e6


@dataclass(frozen=True)
class InfluenceDecomposition:
    main: FloatArray
    adjust_firststage: FloatArray
    adjust_pistar: FloatArray

    @property
    def total(self) -> FloatArray:
        return self.main + self.adjust_firststage + self.adjust_pistar

    def as_dict(self) -> dict[str, FloatArray]:
        return {
            "main": self.main,
            "adjust_firststage": self.adjust_firststage,
            "adjust_pistar": self.adjust_pistar,
        }


def estimates_pistar(info: StratificationInfo) -> bool:
    return info.pi_star_mode is PiStarMode.ESTIMATED


def pistar_weight_derivative(ps: FloatArray, info: StratificationInfo) -> FloatArray:
    """``d w(X) / d pi_star`` at fitted propensities ``ps``."""
    pi, ps_ = info.pi_pop, info.pi_star
    return -ps * pi / ps_ ** 2 + (1.0 - ps) * (1.0 - pi) / (1.0 - ps_) ** 2


def ate_influence(
    data: ObservationSet,
    info: StratificationInfo,
    fits: OutcomeFits,
    point: float,
) -> InfluenceDecomposition:
    """Row-wise ATE influence values, split into their three components.

    ``info`` is the stratification actually used by the estimator, so a
    naive estimator passes ``info.naive()`` and gets unit weights.

    Raises
    ------
    OverlapViolation
        Some first-stage adjustment exceeds 1e6 in absolute value, which
        happens when fitted propensities sit at the clamp boundary.
    """
    w1, w0 = arm_weights(info)
    d, y, ps = data.d, data.y, fits.ps
    w = np.where(d == 1, w1, w0)
    main = w * fits.cate - point
    wx = smoothed_weight(ps, info)
    adjust = wx * (d * (y - fits.mu1) / ps - (1 - d) * (y - fits.mu0) / (1.0 - ps))
    if np.max(np.abs(adjust)) > ADJUST_LIMIT:
        raise OverlapViolation(
            "first-stage adjustment exceeds 1e6; fitted propensities are too close to 0 or 1"
        )
    adjust = adjust - adjust.mean()
    if estimates_pistar(info):
        a_bar = float(np.mean(pistar_weight_derivative(ps, info) * fits.cate))
        adjust_pistar = a_bar * (d - info.pi_star)
    else:
        adjust_pistar = np.zeros(data.n)
    return InfluenceDecomposition(main, adjust, adjust_pistar)


def ate_variance_formula(
    data: ObservationSet,
    info: StratificationInfo,
    fits: OutcomeFits,
    point: float,
    sigma_sq: tuple[FloatArray, FloatArray],
) -> float:
    """Plug-in asymptotic variance of ``sqrt(n) (beta_hat - beta)`` with ``pi_star`` known.

    ``sigma_sq`` holds the fitted conditional residual variances
    ``(sigma0^2(X), sigma1^2(X))`` at every row.
    """
    if estimates_pistar(info):
        raise DomainError("the closed-form ATE variance assumes pi_star is known")
    w1, w0 = arm_weights(info)
    ps = fits.ps
    w = np.where(data.d == 1, w1, w0)
    wx = smoothed_weight(ps, info)
    s0, s1 = sigma_sq
    terms = (w * fits.cate - point) ** 2 + wx ** 2 * s1 / ps + wx ** 2 * s0 / (1.0 - ps)
    return float(np.mean(terms))


def att_influence(
    data: ObservationSet,
    mu0: FloatArray,
    ps: FloatArray,
    point: float,
) -> dict[str, FloatArray]:
    """ATT influence values for ``sum D (Y - mu0(X)) / sum D``.

    Returns the treated-arm term and the centred control-arm adjustment for
    estimating ``mu0``; their sum is the influence value.
    """
    d, y = data.d, data.y
    share = data.treated_fraction
    treated = d * (y - mu0 - point) / share
    odds = ps / (1.0 - ps)
    adjust = -odds * (1 - d) * (y - mu0) / share
    if np.max(np.abs(adjust)) > ADJUST_LIMIT:
        raise OverlapViolation("control-side adjustment exceeds 1e6; propensities too close to 1")
    return {"treated": treated, "adjust_firststage": adjust - adjust.mean()}


def att_variance_formula(
    data: ObservationSet,
    info: StratificationInfo,
    fits: OutcomeFits,
    point: float,
    sigma_sq: tuple[FloatArray, FloatArray],
) -> float:
    """Plug-in asymptotic variance of ``sqrt(n) (gamma_hat - gamma)`` with ``pi_star`` known."""
    ps, share = fits.ps, info.pi_star
    s0, s1 = sigma_sq
    terms = (
        ps * (fits.cate - point) ** 2 / share ** 2
        + ps * s1 / share ** 2
        + ps ** 2 * s0 / (share ** 2 * (1.0 - ps))
    )
    return float(np.mean(terms))


def logit_correction(
    design: FloatArray,
    d: FloatArray,
    ps: FloatArray,
    dm_dps: FloatArray,
) -> FloatArray:
    """Influence contribution of estimating a logit propensity inside a moment ``m(ps)``.

    Returns ``G A^{-1} s_i`` with ``s_i = (D_i - ps_i) V_i`` the logit score
    for design rows ``V_i``, ``A`` the logit information per observation and
    ``G = mean(dm/dps * ps (1 - ps) V)``.
    """
    v = ps * (1.0 - ps)
    info = design.T @ (design * v[:, None]) / design.shape[0]
    grad = (design * (dm_dps * v)[:, None]).mean(axis=0)
    score = design * (d - ps)[:, None]
    return score @ np.linalg.solve(info, grad)


def variance_of(influence: FloatArray) -> float:
    """Empirical variance of influence values: the ``sqrt(n)``-scale variance estimate."""
    return float(np.mean((influence - influence.mean()) ** 2))


def build_confidence_interval(
    point: float, var_sqrtn: float, n: int, level: float = 0.95
) -> tuple[float, float]:
    """Normal interval ``point +/- z_{(1+level)/2} * sqrt(var_sqrtn / n)``.

    Raises
    ------
    DomainError
        ``level`` outside (0, 1) or a negative variance.
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    if not var_sqrtn >= 0.0:
        raise DomainError(f"variance must be nonnegative, got {var_sqrtn}")
    half = stats.norm.ppf(0.5 + level / 2.0) * np.sqrt(var_sqrtn / n)
    return point - half, point + half
