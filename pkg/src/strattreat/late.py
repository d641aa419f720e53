"""Wald (binary-instrument IV) estimators of the local average treatment effect.

Under stratification on an endogenous treatment the sample Wald ratio mixes
compliance types in the wrong proportions. Weighting each row by
``w = D pi / pi_star + (1 - D) (1 - pi) / (1 - pi_star)`` turns sample
means into population means, so the weighted IV moment
``E*[w (1, Z)' (Y - alpha - beta D)] = 0`` recovers the population LATE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EffectEstimate, Estimand, FloatArray, ObservationSet, StratificationInfo
from .errors import MissingInstrument, SingularJacobian, WeakFirstStage
from .inference import build_confidence_interval, variance_of
from .weighting import arm_weights

WEAK_FIRST_STAGE = 1e-10
JACOBIAN_MAX_COND = 1e12


@dataclass(frozen=True)
class WaldResult:
    """Solution of the (weighted) just-identified IV system.

    ``reduced_form`` and ``first_stage`` are the weighted covariances of
    ``Z`` with ``Y`` and with ``D``; ``beta`` is their ratio.
    """

    beta: float
    alpha: float
    reduced_form: float
    first_stage: float
    weights_used: bool


def _weights(data: ObservationSet, info: StratificationInfo | None) -> FloatArray:
    if info is None:
        return np.ones(data.n)
    w1, w0 = arm_weights(info)
    return np.where(data.d == 1, w1, w0)


def _solve(data: ObservationSet, w: FloatArray, weights_used: bool) -> WaldResult:
    if data.z is None:
        raise MissingInstrument("the Wald estimator needs an instrument column")
    z = data.z.astype(np.float64)
    d = data.d.astype(np.float64)
    y = data.y
    total = w.sum()
    zbar = float(w @ z / total)
    rf = float(w @ ((z - zbar) * y) / total)
    fs = float(w @ ((z - zbar) * d) / total)
    if abs(fs) < WEAK_FIRST_STAGE:
        raise WeakFirstStage(f"first stage {fs:.3g} is numerically zero")
    beta = rf / fs
    alpha = float(w @ y / total) - beta * float(w @ d / total)
    return WaldResult(beta=beta, alpha=alpha, reduced_form=rf, first_stage=fs, weights_used=weights_used)


def wald_naive(data: ObservationSet) -> WaldResult:
    """Sample Wald ratio. Inconsistent for the population LATE under stratification.

    Raises
    ------
    MissingInstrument
        ``data.z`` is absent.
    WeakFirstStage
        The sample covariance of ``Z`` and ``D`` is below 1e-10 in magnitude,
        including the case of a constant instrument.
    """
    return _solve(data, np.ones(data.n), False)


def wald_reweighted(data: ObservationSet, info: StratificationInfo) -> WaldResult:
    """Weighted Wald ratio ``sum w (Z - Zbar_w) Y / sum w (Z - Zbar_w) D``.

    Equals :func:`wald_naive` when ``pi == pi_star``.
    """
    return _solve(data, _weights(data, info), True)


def late_inference(
    data: ObservationSet,
    info: StratificationInfo | None,
    result: WaldResult,
    level: float = 0.95,
) -> EffectEstimate:
    """Sandwich standard error for the Wald slope, weights treated as fixed.

    ``info`` is ignored (unit weights) when ``result.weights_used`` is false.

    Raises
    ------
    SingularJacobian
        The moment Jacobian ``-mean(w (1, Z)(1, D)')`` is singular.
    """
    w = _weights(data, info if result.weights_used else None)
    z = data.z.astype(np.float64)
    d = data.d.astype(np.float64)
    resid = data.y - result.alpha - result.beta * d
    inst = np.column_stack([np.ones(data.n), z])
    g = inst * (w * resid)[:, None]
    jac = -(inst * w[:, None]).T @ np.column_stack([np.ones(data.n), d]) / data.n
    if not np.isfinite(np.linalg.cond(jac)) or np.linalg.cond(jac) > JACOBIAN_MAX_COND:
        raise SingularJacobian("IV moment Jacobian is singular")
    influence = -np.linalg.solve(jac, g.T)[1]
    se = float(np.sqrt(variance_of(influence) / data.n))
    lo, hi = build_confidence_interval(result.beta, se ** 2 * data.n, data.n, level)
    method = "late_wald_reweighted" if result.weights_used else "late_wald_naive"
    metadata = {
        "reweighted": result.weights_used,
        "alpha": result.alpha,
        "reduced_form": result.reduced_form,
        "first_stage": result.first_stage,
        "se_method": "weighted_gmm_sandwich",
        "se_note": "sandwich SE treating the weights as fixed; no analytic variance derived for this estimator",
    }
    if info is not None:
        metadata.update(pi_pop=info.pi_pop, pi_star=info.pi_star, pi_star_mode=info.pi_star_mode.value)
    return EffectEstimate(
        estimand=Estimand.LATE,
        method=method,
        point=result.beta,
        se=se,
        ci_low=float(lo),
        ci_high=float(hi),
        n=data.n,
        level=level,
        influence=influence,
        se_influence=se,
        diagnostics={"weight": w, "residual": resid},
        metadata=metadata,
    )


def estimate_late(
    data: ObservationSet, info: StratificationInfo, reweighted: bool = True, level: float = 0.95
) -> EffectEstimate:
    """Wald point estimate plus sandwich inference in one call."""
    result = wald_reweighted(data, info) if reweighted else wald_naive(data)
    return late_inference(data, info, result, level)
