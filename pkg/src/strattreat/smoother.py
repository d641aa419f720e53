"""First-stage nonparametric fits: arm-wise conditional means and the sample propensity.

Conditional means are Gaussian-kernel Nadaraya-Watson (local constant) or
local-linear regressions, with a product kernel for several covariates.
The propensity is a logistic regression fitted by iteratively reweighted
least squares, or a Nadaraya-Watson regression of ``d`` on ``x``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.special import expit, logit

from ._kernels import kernel_moments
from .data import FloatArray, ObservationSet
from .errors import BandwidthError, ConfigError, DimensionMismatch, EmptyArm, SeparationError

SILVERMAN_CONSTANT = 1.06
LOCAL_LINEAR_MAX_COND = 1e10
SEPARATION_BOUND = 30.0


class FitKind(str, enum.Enum):
    KERNEL_MEAN = "kernel_mean"
    LOCAL_LINEAR_MEAN = "local_linear_mean"
    LOGIT_PROPENSITY = "logit_propensity"
    KERNEL_PROPENSITY = "kernel_propensity"


class Regressor(str, enum.Enum):
    COVARIATES = "covariates"
    FITTED_PROPENSITY = "fitted_propensity"


@dataclass(frozen=True)
class SmootherConfig:
    """Tuning for every first-stage fit.

    Attributes
    ----------
    kind : {"nadaraya_watson", "local_linear"}
        Conditional-mean smoother.
    bandwidth : float, optional
        Overrides the Silverman rule for every regressor dimension.
    bandwidth_scale : float
        Multiplier on the Silverman rule; ignored when ``bandwidth`` is set.
    propensity : {"logit", "kernel"}
        Sample-propensity model.
    logit_degree : int
        Polynomial order of each covariate in the logit index. ``1`` is the
        plain linear-index logit; higher orders give a series logit.
    logit_max_iter, logit_tol : int, float
        IRLS stopping rule on the score norm.
    clamp_eps : float
        Propensity predictions are clipped to ``[clamp_eps, 1 - clamp_eps]``.
    ps_scale : {"logit", "probability"}
        Scale of the fitted propensity when it is used as a regressor. Both
        generate the same conditioning information; the log-odds scale keeps
        the regression function smooth near 0 and 1.
    """

    kind: str = "nadaraya_watson"
    bandwidth: float | None = None
    bandwidth_scale: float = 1.0
    propensity: str = "logit"
    logit_degree: int = 1
    logit_max_iter: int = 100
    logit_tol: float = 1e-8
    clamp_eps: float = 1e-6
    ps_scale: str = "logit"

    def __post_init__(self) -> None:
        if self.kind not in ("nadaraya_watson", "local_linear"):
            raise ConfigError(f"unknown smoother kind {self.kind!r}")
        if self.propensity not in ("logit", "kernel"):
            raise ConfigError(f"unknown propensity model {self.propensity!r}")
        if not (isinstance(self.logit_degree, int) and 1 <= self.logit_degree <= 6):
            raise ConfigError(f"logit_degree must be an integer in [1, 6], got {self.logit_degree!r}")
        if self.ps_scale not in ("logit", "probability"):
            raise ConfigError(f"unknown propensity scale {self.ps_scale!r}")
        if self.bandwidth is not None and not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise BandwidthError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        if not (self.bandwidth_scale > 0 and math.isfinite(self.bandwidth_scale)):
            raise BandwidthError(f"bandwidth_scale must be positive and finite, got {self.bandwidth_scale}")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError("clamp_eps must lie in (0, 0.5)")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SmootherConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown smoother config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def silverman_bandwidth(r: FloatArray) -> FloatArray:
    """Rule-of-thumb ``1.06 * sd * n^(-1/5)`` for each column of ``r``.

    Columns with zero spread get bandwidth 1 so that the kernel stays defined.
    """
    r = np.asarray(r, dtype=np.float64)
    n = r.shape[0]
    sd = np.std(r, axis=0, ddof=1) if n > 1 else np.zeros(r.shape[1])
    h = SILVERMAN_CONSTANT * sd * n ** (-0.2)
    return np.where(h > 0, h, 1.0)


def _as_queries(queries, k: int) -> FloatArray:
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim != 2 and q.size == 0:
        return np.empty((0, k))
    if q.ndim == 1:
        q = q.reshape(-1, 1) if k == 1 else q.reshape(1, -1)
    if q.ndim != 2 or q.shape[1] != k:
        raise DimensionMismatch(f"queries have dimension {q.shape[-1]}, fit expects {k}")
    return q


def kernel_regression(
    queries: FloatArray,
    r: FloatArray,
    y: FloatArray,
    h: FloatArray,
    local_linear: bool,
) -> FloatArray:
    """Gaussian-kernel regression of ``y`` on ``r`` evaluated at ``queries``.

    Local-linear rows whose scaled moment matrix has condition number above
    1e10 fall back to the local-constant value.
    """
    S, T = kernel_moments(queries, r, y, h, 1 if local_linear else 0)
    nw = T[:, 0] / S[:, 0, 0]
    if not local_linear or queries.shape[0] == 0:
        return nw
    out = nw.copy()
    scaled = S / S[:, :1, :1]
    cond = np.linalg.cond(scaled)
    ok = np.isfinite(cond) & (cond <= LOCAL_LINEAR_MAX_COND)
    if ok.any():
        coef = np.linalg.solve(S[ok], T[ok][..., None])[..., 0]
        out[ok] = coef[:, 0]
    return out


@dataclass(frozen=True, eq=False)
class SmootherFit:
    """A fitted first-stage function.

    ``predict`` always takes covariate rows; fits on the fitted propensity
    map queries through ``ps_fit`` first.
    """

    kind: FitKind
    k: int
    arm: int | None = None
    bandwidth: FloatArray | None = None
    coefficients: FloatArray | None = None
    covariance: FloatArray | None = None
    logit_degree: int = 1
    logit_center: FloatArray | None = None
    logit_scale: FloatArray | None = None
    training_ref: str = ""
    regressor: Regressor = Regressor.COVARIATES
    ps_fit: "SmootherFit | None" = None
    ps_scale: str = "logit"
    clamp_eps: float = 1e-6
    converged: bool = True
    iterations: int = 0
    _r: FloatArray = field(default=None, repr=False)
    _y: FloatArray = field(default=None, repr=False)

    @property
    def is_propensity(self) -> bool:
        return self.kind in (FitKind.LOGIT_PROPENSITY, FitKind.KERNEL_PROPENSITY)

    def regressor_values(self, queries) -> FloatArray:
        q = _as_queries(queries, self.k)
        if self.regressor is Regressor.COVARIATES:
            return q
        p = self.ps_fit.predict(q)
        r = logit(p) if self.ps_scale == "logit" else p
        return r.reshape(-1, 1)

    def predict(self, queries) -> FloatArray:
        return self.predict_regressor(self.regressor_values(queries))

    def predict_regressor(self, r: FloatArray) -> FloatArray:
        """Predict from regressor values directly (covariates, or the propensity index)."""
        if r.shape[0] == 0:
            return np.empty(0)
        if self.kind is FitKind.LOGIT_PROPENSITY:
            p = expit(self.logit_design(r) @ self.coefficients)
        elif r.shape[1] == 0:
            p = np.full(r.shape[0], float(np.mean(self._y)))
        else:
            p = kernel_regression(
                r, self._r, self._y, self.bandwidth, self.kind is FitKind.LOCAL_LINEAR_MEAN
            )
        if self.is_propensity:
            p = np.clip(p, self.clamp_eps, 1.0 - self.clamp_eps)
        return p

    def logit_design(self, x: FloatArray) -> FloatArray:
        """Logit design matrix ``[1, index terms]`` at covariate rows ``x``."""
        return logit_design(_as_queries(x, self.k), self.logit_degree, self.logit_center, self.logit_scale)

    def fitted(self) -> FloatArray:
        """In-sample predictions at the training regressor values."""
        if self.regressor is Regressor.FITTED_PROPENSITY:
            raise ConfigError("in-sample values of a propensity-regressor fit need covariates")
        return self.predict(self._r)

    def describe(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "training_ref": self.training_ref}
        if self.arm is not None:
            out["arm"] = self.arm
        if self.bandwidth is not None:
            out["bandwidth"] = self.bandwidth.tolist()
        if self.coefficients is not None:
            out["coefficients"] = self.coefficients.tolist()
            out["converged"] = self.converged
            out["iterations"] = self.iterations
        out["regressor"] = self.regressor.value
        return out


def _bandwidth(r: FloatArray, config: SmootherConfig) -> FloatArray:
    if config.bandwidth is not None:
        return np.full(r.shape[1], float(config.bandwidth))
    return config.bandwidth_scale * silverman_bandwidth(r)


def fit_conditional_mean(
    data: ObservationSet,
    arm: int,
    regressor: Regressor | str = Regressor.COVARIATES,
    ps_fit: SmootherFit | None = None,
    config: SmootherConfig | None = None,
    bandwidth: float | None = None,
) -> SmootherFit:
    """Fit ``E*[Y | D = arm, r]`` with ``r`` either ``X`` or the fitted propensity.

    Parameters
    ----------
    data : ObservationSet
    arm : {0, 1}
    regressor : Regressor
        ``covariates`` or ``fitted_propensity``; the latter needs ``ps_fit``.
    ps_fit : SmootherFit, optional
        Sample-propensity fit, required for ``fitted_propensity``.
    config : SmootherConfig, optional
    bandwidth : float, optional
        Per-call override; must be positive.

    Raises
    ------
    EmptyArm
        No rows in ``arm``.
    BandwidthError
        Nonpositive or NaN bandwidth.
    """
    config = config or SmootherConfig()
    if bandwidth is not None:
        if not (bandwidth > 0 and math.isfinite(bandwidth)):
            raise BandwidthError(f"bandwidth must be positive and finite, got {bandwidth}")
        config = replace(config, bandwidth=bandwidth)
    regressor = Regressor(regressor)
    mask = data.arm(arm)
    if not mask.any():
        raise EmptyArm(f"arm d={arm} has no rows")
    kind = FitKind.LOCAL_LINEAR_MEAN if config.kind == "local_linear" else FitKind.KERNEL_MEAN
    if regressor is Regressor.FITTED_PROPENSITY:
        if ps_fit is None:
            raise ConfigError("a propensity-regressor fit needs ps_fit")
        p = ps_fit.predict(data.x[mask])
        r = (logit(p) if config.ps_scale == "logit" else p).reshape(-1, 1)
    else:
        r = data.x[mask]
    h = _bandwidth(r, config) if r.shape[1] else None
    return SmootherFit(
        kind=kind,
        k=data.k,
        arm=int(arm),
        bandwidth=h,
        training_ref=data.fingerprint,
        regressor=regressor,
        ps_fit=ps_fit,
        ps_scale=config.ps_scale,
        _r=r,
        _y=data.y[mask].copy(),
    )


def fit_arm_regression(r: FloatArray, y: FloatArray, config: SmootherConfig,
                       local_linear: bool | None = None, training_ref: str = "") -> SmootherFit:
    """Kernel regression of ``y`` on an arbitrary regressor matrix ``r`` (used for residual variances)."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 1:
        r = r.reshape(-1, 1)
    if local_linear is None:
        local_linear = config.kind == "local_linear"
    return SmootherFit(
        kind=FitKind.LOCAL_LINEAR_MEAN if local_linear else FitKind.KERNEL_MEAN,
        k=r.shape[1],
        bandwidth=_bandwidth(r, config) if r.shape[1] else None,
        training_ref=training_ref,
        _r=r,
        _y=np.asarray(y, dtype=np.float64).copy(),
    )


def logit_design(
    x: FloatArray,
    degree: int = 1,
    center: FloatArray | None = None,
    scale: FloatArray | None = None,
) -> FloatArray:
    """``[1, x]`` for ``degree == 1``; otherwise ``[1, u, u^2, ..., u^degree]`` per column.

    Higher orders use the standardized covariate ``u = (x - center) / scale``
    so that the powers stay well conditioned.
    """
    x = np.asarray(x, dtype=np.float64)
    ones = np.ones((x.shape[0], 1))
    if degree == 1:
        return np.hstack([ones, x])
    u = (x - center) / scale
    return np.hstack([ones] + [u ** j for j in range(1, degree + 1)])


def fit_logit(
    x: FloatArray,
    d: FloatArray,
    max_iter: int = 100,
    tol: float = 1e-8,
    design: FloatArray | None = None,
) -> tuple[FloatArray, FloatArray, bool, int]:
    """Logistic regression of ``d`` on ``[1, x]`` by IRLS (Newton-Raphson).

    A prebuilt ``design`` (intercept column included) replaces ``[1, x]``.

    Returns coefficients, their inverse-information covariance, a convergence
    flag and the iteration count. Stops when the score norm drops below ``tol``.

    Raises
    ------
    SeparationError
        A coefficient exceeds 30 in absolute value or the information matrix
        becomes singular, both symptoms of (quasi-)separation.
    """
    if design is None:
        design = np.column_stack([np.ones(x.shape[0]), x])
    d = np.asarray(d, dtype=np.float64)
    beta = np.zeros(design.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(design @ beta)
        score = design.T @ (d - p)
        if np.linalg.norm(score) < tol:
            converged = True
            break
        info = design.T @ (design * (p * (1.0 - p))[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationError("logit information matrix is singular") from None
        beta = beta + step
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise SeparationError(
                f"logit coefficients diverge (max |coef| = {np.max(np.abs(beta)):.1f}); "
                "treatment is (quasi-)separated by the covariates"
            )
    p = expit(design @ beta)
    info = design.T @ (design * (p * (1.0 - p))[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SeparationError("logit information matrix is singular") from None
    return beta, cov, converged, it


def fit_propensity(data: ObservationSet, config: SmootherConfig | None = None) -> SmootherFit:
    """Fit the sample propensity ``Pr*(D = 1 | X)``.

    With no covariates the logit reduces to an intercept and predicts
    ``mean(d)`` everywhere.

    Raises
    ------
    EmptyArm
        Either arm is empty.
    SeparationError
        The logit diverges.
    """
    config = config or SmootherConfig()
    data.require_arms()
    if config.propensity == "kernel" and data.k > 0:
        h = _bandwidth(data.x, config)
        return SmootherFit(
            kind=FitKind.KERNEL_PROPENSITY,
            k=data.k,
            bandwidth=h,
            training_ref=data.fingerprint,
            clamp_eps=config.clamp_eps,
            _r=data.x,
            _y=data.d.astype(np.float64),
        )
    degree = config.logit_degree if data.k > 0 else 1
    center = scale = None
    if degree > 1:
        center = data.x.mean(axis=0)
        scale = data.x.std(axis=0)
        scale[scale == 0] = 1.0
    design = logit_design(data.x, degree, center, scale)
    beta, cov, converged, it = fit_logit(
        data.x, data.d, config.logit_max_iter, config.logit_tol, design=design
    )
    return SmootherFit(
        kind=FitKind.LOGIT_PROPENSITY,
        k=data.k,
        coefficients=beta,
        covariance=cov,
        logit_degree=degree,
        logit_center=center,
        logit_scale=scale,
        training_ref=data.fingerprint,
        clamp_eps=config.clamp_eps,
        converged=converged,
        iterations=it,
        _r=data.x,
        _y=data.d.astype(np.float64),
    )


def predict(fit: SmootherFit, queries) -> FloatArray:
    """Pointwise predictions of ``fit`` at covariate rows ``queries``."""
    return fit.predict(queries)
