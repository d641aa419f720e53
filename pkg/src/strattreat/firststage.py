"""Lazily computed first-stage fits shared by the estimators on one sample.

None of these fits depend on the population fraction ``pi``, so a naive
estimator and its reweighted counterpart (or several estimators in one
Monte Carlo replication) can share a single :class:`FirstStage`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy.special import logit

from .data import FloatArray, ObservationSet
from .errors import ConfigError
from .smoother import (
    Regressor,
    SmootherConfig,
    SmootherFit,
    fit_arm_regression,
    fit_conditional_mean,
    fit_propensity,
)
from .weighting import DEFAULT_TRIM_EPS, TrimPolicy


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything an estimator needs besides the data and the stratification facts."""

    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    trim_eps: float = DEFAULT_TRIM_EPS
    trim_policy: TrimPolicy = TrimPolicy.ERROR
    level: float = 0.95

    def __post_init__(self) -> None:
        object.__setattr__(self, "trim_policy", TrimPolicy(self.trim_policy))
        if not 0.0 <= self.trim_eps < 0.5:
            raise ConfigError("trim_eps must lie in [0, 0.5)")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "EstimatorConfig":
        d = dict(d or {})
        smoother = SmootherConfig.from_dict(d.pop("smoother", {}) or {})
        unknown = set(d) - {"trim_eps", "trim_policy", "level"}
        if unknown:
            raise ConfigError(f"unknown estimator config keys: {sorted(unknown)}")
        return cls(smoother=smoother, **d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "smoother": self.smoother.to_dict(),
            "trim_eps": self.trim_eps,
            "trim_policy": self.trim_policy.value,
            "level": self.level,
        }


@dataclass(frozen=True)
class OutcomeFits:
    """Row-wise first-stage values consumed by the influence functions.

    ``mu1`` and ``mu0`` are the fitted arm means at every row (on ``X`` or on
    the fitted propensity); ``ps`` is the fitted sample propensity.
    """

    mu1: FloatArray
    mu0: FloatArray
    ps: FloatArray

    @property
    def cate(self) -> FloatArray:
        return self.mu1 - self.mu0


class FirstStage:
    def __init__(self, data: ObservationSet, config: EstimatorConfig | None = None) -> None:
        self.data = data
        self.config = config or EstimatorConfig()

    @property
    def smoother(self) -> SmootherConfig:
        return self.config.smoother

    @cached_property
    def ps_fit(self) -> SmootherFit:
        return fit_propensity(self.data, self.smoother)

    @cached_property
    def ps(self) -> FloatArray:
        return self.ps_fit.predict(self.data.x)

    def _arm_fits(self, regressor: Regressor) -> tuple[SmootherFit, SmootherFit]:
        ps_fit = self.ps_fit if regressor is Regressor.FITTED_PROPENSITY else None
        return tuple(
            fit_conditional_mean(self.data, arm, regressor, ps_fit, self.smoother) for arm in (0, 1)
        )

    @cached_property
    def x_fits(self) -> tuple[SmootherFit, SmootherFit]:
        return self._arm_fits(Regressor.COVARIATES)

    @cached_property
    def ps_fits(self) -> tuple[SmootherFit, SmootherFit]:
        return self._arm_fits(Regressor.FITTED_PROPENSITY)

    @cached_property
    def _ps_index(self) -> FloatArray:
        p = self.ps
        r = logit(p) if self.smoother.ps_scale == "logit" else p
        return r.reshape(-1, 1)

    def _predict_arm(self, fit: SmootherFit, regressor: Regressor) -> FloatArray:
        if regressor is Regressor.COVARIATES:
            return fit.predict(self.data.x)
        return fit.predict_regressor(self._ps_index)

    @cached_property
    def x_means(self) -> tuple[FloatArray, FloatArray]:
        f0, f1 = self.x_fits
        return (self._predict_arm(f0, Regressor.COVARIATES), self._predict_arm(f1, Regressor.COVARIATES))

    @cached_property
    def control_x_mean(self) -> FloatArray:
        """Control-arm fit at every row; computed without the treated-arm fit when that is not cached."""
        if "x_means" in self.__dict__:
            return self.x_means[0]
        return self._predict_arm(self.x_fits[0], Regressor.COVARIATES)

    @cached_property
    def ps_means(self) -> tuple[FloatArray, FloatArray]:
        f0, f1 = self.ps_fits
        return (
            self._predict_arm(f0, Regressor.FITTED_PROPENSITY),
            self._predict_arm(f1, Regressor.FITTED_PROPENSITY),
        )

    @cached_property
    def control_ps_mean(self) -> FloatArray:
        if "ps_means" in self.__dict__:
            return self.ps_means[0]
        return self._predict_arm(self.ps_fits[0], Regressor.FITTED_PROPENSITY)

    def outcome_fits(self, form: str = "x") -> OutcomeFits:
        mu0, mu1 = self.x_means if form == "x" else self.ps_means
        return OutcomeFits(mu1=mu1, mu0=mu0, ps=self.ps)

    def residual_variances(self, form: str = "x") -> tuple[FloatArray, FloatArray]:
        """Kernel regressions of squared within-arm residuals, floored at 0, at every row.

        Returns ``(sigma0_sq, sigma1_sq)``.
        """
        key = f"_resvar_{form}"
        if key in self.__dict__:
            return self.__dict__[key]
        mus = self.x_means if form == "x" else self.ps_means
        regressor = self.data.x if form == "x" else self._ps_index
        out = []
        for arm in (0, 1):
            mask = self.data.arm(arm)
            e2 = (self.data.y[mask] - mus[arm][mask]) ** 2
            fit = fit_arm_regression(regressor[mask], e2, self.smoother, local_linear=False,
                                     training_ref=self.data.fingerprint)
            out.append(np.maximum(fit.predict_regressor(regressor), 0.0))
        self.__dict__[key] = tuple(out)
        return self.__dict__[key]
