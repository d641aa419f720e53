"""ATE and ATT estimators for samples stratified on treatment status.

Every ATE estimator comes in a naive form, which treats the sample as if it
were random, and a reweighted form, which undoes the stratification with the
arm weights ``pi / pi_star`` and ``(1 - pi) / (1 - pi_star)``. The naive form
is the reweighted code run at ``pi = pi_star``, so the two coincide exactly
when there is no stratification.

ATT estimators take no weights: the treated-arm average of
``Y - mu0(X)`` already targets the population ATT under stratification.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import (
    EffectEstimate,
    Estimand,
    FloatArray,
    ObservationSet,
    PiStarMode,
    StratificationInfo,
)
from .errors import ConfigError, DimensionMismatch
from .firststage import EstimatorConfig, FirstStage
from .inference import (
    ate_influence,
    ate_variance_formula,
    att_influence,
    att_variance_formula,
    build_confidence_interval,
    estimates_pistar,
    logit_correction,
    pistar_weight_derivative,
    variance_of,
)
from .weighting import TrimPolicy, arm_weights, enforce_overlap, smoothed_weight


class Form(str, enum.Enum):
    REGADJ = "regadj"
    PSCOND = "pscond"
    IPW = "ipw"


@dataclass(frozen=True)
class EstimatorSpec:
    """One entry of the estimator catalog.

    Reweighted ATT is rejected: the unweighted ATT estimators are already
    consistent under stratification, so asking for weights signals a mistake.
    """

    estimand: Estimand
    form: Form
    reweighted: bool = False
    pi_star_mode: PiStarMode = PiStarMode.KNOWN

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimand", Estimand(self.estimand))
        object.__setattr__(self, "form", Form(self.form))
        object.__setattr__(self, "pi_star_mode", PiStarMode(self.pi_star_mode))
        if self.estimand is Estimand.LATE:
            raise ConfigError("LATE is estimated by the Wald functions, not the ATE/ATT catalog")
        if self.estimand is Estimand.ATT and self.reweighted:
            raise ConfigError("reweighted ATT is not a valid configuration; ATT needs no reweighting")

    @property
    def name(self) -> str:
        if self.estimand is Estimand.ATT:
            return f"att_{self.form.value}"
        tag = "reweighted" if self.reweighted else "naive"
        return f"ate_{self.form.value}_{tag}"

    @classmethod
    def parse(cls, name: str, pi_star_mode: PiStarMode | str = PiStarMode.KNOWN) -> "EstimatorSpec":
        """Build a spec from names such as ``ate_regadj_reweighted`` or ``att_ipw``."""
        parts = name.lower().split("_")
        try:
            estimand = Estimand(parts[0].upper())
            form = Form(parts[1])
        except (IndexError, ValueError):
            raise ConfigError(f"unknown estimator name {name!r}") from None
        tail = parts[2:]
        if tail not in ([], ["naive"], ["reweighted"]):
            raise ConfigError(f"unknown estimator name {name!r}")
        if estimand is Estimand.ATE and not tail:
            raise ConfigError(f"ATE estimator {name!r} must end in _naive or _reweighted")
        return cls(estimand, form, tail == ["reweighted"], PiStarMode(pi_star_mode))


# shared plumbing ------------------------------------------------------------


def _prepare(
    data: ObservationSet,
    info: StratificationInfo,
    config: EstimatorConfig | None,
    first_stage: FirstStage | None,
    sides: str,
    needs_propensity: bool = True,
) -> tuple[ObservationSet, StratificationInfo, FirstStage, dict]:
    """Check arms, apply the trimming policy and return the (possibly reduced) problem."""
    data.require_arms()
    config = config or EstimatorConfig()
    fs = first_stage if first_stage is not None and first_stage.data is data else FirstStage(data, config)
    trim = {"policy": config.trim_policy.value, "eps": config.trim_eps, "kept_fraction": 1.0, "n_dropped": 0}
    if not needs_propensity:
        return data, info, fs, trim
    keep = enforce_overlap(fs.ps, config.trim_eps, config.trim_policy, sides)
    if keep.all():
        return data, info, fs, trim
    # drop policy: refit on the kept rows and recompute the sample treated fraction
    kept = data.subset(keep)
    kept.require_arms()
    info = StratificationInfo(info.pi_pop, kept.treated_fraction, info.pi_star_mode)
    trim.update(kept_fraction=kept.n / data.n, n_dropped=int(data.n - kept.n))
    return kept, info, FirstStage(kept, config), trim


def _finish(
    estimand: Estimand,
    method: str,
    point: float,
    influence: FloatArray,
    n: int,
    config: EstimatorConfig,
    var_formula: float | None,
    components: dict[str, FloatArray],
    diagnostics: dict[str, FloatArray],
    metadata: dict,
) -> EffectEstimate:
    se_influence = float(np.sqrt(variance_of(influence) / n))
    se_formula = None if var_formula is None else float(np.sqrt(var_formula / n))
    se = se_formula if se_formula is not None else se_influence
    lo, hi = build_confidence_interval(point, se ** 2 * n, n, config.level)
    metadata["se_source"] = "formula" if se_formula is not None else "influence"
    return EffectEstimate(
        estimand=estimand,
        method=method,
        point=float(point),
        se=se,
        ci_low=float(lo),
        ci_high=float(hi),
        n=n,
        level=config.level,
        influence=influence,
        se_formula=se_formula,
        se_influence=se_influence,
        components=components,
        diagnostics=diagnostics,
        metadata=metadata,
    )


def _metadata(info: StratificationInfo, reweighted: bool, fs: FirstStage, trim: dict) -> dict:
    return {
        "reweighted": reweighted,
        "pi_pop": info.pi_pop,
        "pi_star": info.pi_star,
        "pi_star_mode": info.pi_star_mode.value,
        "smoother": fs.smoother.to_dict(),
        "trim": trim,
    }


# ATE ------------------------------------------------------------------------


def _ate_conditioning(
    form: Form,
    data: ObservationSet,
    info: StratificationInfo,
    reweighted: bool,
    config: EstimatorConfig | None,
    first_stage: FirstStage | None,
) -> EffectEstimate:
    config = config or EstimatorConfig()
    data, info, fs, trim = _prepare(data, info, config, first_stage, "both")
    use = info if reweighted else info.naive()
    key = "x" if form is Form.REGADJ else "ps"
    fits = fs.outcome_fits(key)
    w1, w0 = arm_weights(use)
    w = np.where(data.d == 1, w1, w0)
    point = float(np.mean(w * fits.cate))

    parts = ate_influence(data, use, fits, point)
    influence = parts.total
    var_formula = None
    if not estimates_pistar(use):
        var_formula = ate_variance_formula(data, use, fits, point, fs.residual_variances(key))
    meta = _metadata(info, reweighted, fs, trim)
    meta["form"] = form.value
    unadjusted = parts.main + parts.adjust_firststage
    meta["se_influence_unadjusted"] = float(np.sqrt(variance_of(unadjusted) / data.n))
    diagnostics = {
        "mu0": fits.mu0,
        "mu1": fits.mu1,
        "ps": fits.ps,
        "weight": w,
        "w_of_x": smoothed_weight(fits.ps, use),
    }
    tag = "reweighted" if reweighted else "naive"
    return _finish(Estimand.ATE, f"ate_{form.value}_{tag}", point, influence, data.n, config,
                   var_formula, parts.as_dict(), diagnostics, meta)


def ate_regadjust(
    data: ObservationSet,
    info: StratificationInfo,
    reweighted: bool = True,
    config: EstimatorConfig | None = None,
    first_stage: FirstStage | None = None,
) -> EffectEstimate:
    """Regression-adjustment ATE: ``mean(w_D * (mu1(X) - mu0(X)))``.

    Parameters
    ----------
    data : ObservationSet
        Stratified sample.
    info : StratificationInfo
        Population and sample treated fractions.
    reweighted : bool
        Apply the arm weights. ``False`` gives the conventional estimator,
        which converges to the sample-law average of the CATE.
    config : EstimatorConfig, optional
        Smoother, trimming and interval settings.
    first_stage : FirstStage, optional
        Cached fits for the same ``data`` to share across estimators.

    Returns
    -------
    EffectEstimate
        ``se`` is the plug-in variance formula when ``pi_star`` is known and
        the influence-value SE (including the ``pi_star`` adjustment)
        otherwise.

    Raises
    ------
    EmptyArm
        Either arm has no rows.
    OverlapViolation
        Fitted propensities leave ``[eps, 1 - eps]`` under the error policy.
    """
    return _ate_conditioning(Form.REGADJ, data, info, reweighted, config, first_stage)


def ate_pscond(
    data: ObservationSet,
    info: StratificationInfo,
    reweighted: bool = True,
    config: EstimatorConfig | None = None,
    first_stage: FirstStage | None = None,
) -> EffectEstimate:
    """Propensity-conditioning ATE: arm regressions on the fitted sample propensity.

    Same interface and weights as :func:`ate_regadjust`; the arm means are
    fitted on ``pi_star_hat(X)`` (log-odds scale by default) instead of ``X``.

    Raises
    ------
    DimensionMismatch
        No covariates to fit a propensity on.
    SeparationError
        The logit propensity fit diverges.
    """
    if data.k == 0:
        raise DimensionMismatch("propensity conditioning needs at least one covariate")
    return _ate_conditioning(Form.PSCOND, data, info, reweighted, config, first_stage)


def ate_ipw(
    data: ObservationSet,
    info: StratificationInfo,
    reweighted: bool = True,
    config: EstimatorConfig | None = None,
    first_stage: FirstStage | None = None,
) -> EffectEstimate:
    """Inverse-propensity ATE with the smoothed weight ``w(X)``.

    ``mean((D Y / p - (1 - D) Y / (1 - p)) * w(X))`` with ``p`` the fitted
    sample propensity and ``w(X) = w0 + p (w1 - w0)``. The standard error
    accounts for the estimated logit coefficients through the stacked
    M-estimator sandwich; with a kernel propensity the efficient influence
    function is used instead.
    """
    config = config or EstimatorConfig()
    data, info, fs, trim = _prepare(data, info, config, first_stage, "both")
    use = info if reweighted else info.naive()
    w1, w0 = arm_weights(use)
    d, y, p = data.d, data.y, fs.ps
    a = d * y / p - (1 - d) * y / (1.0 - p)
    omega = smoothed_weight(p, use)
    m = a * omega
    point = float(np.mean(m))

    meta = _metadata(info, reweighted, fs, trim)
    meta["form"] = Form.IPW.value
    components: dict[str, FloatArray]
    if fs.smoother.propensity == "logit":
        da = -d * y / p ** 2 - (1 - d) * y / (1.0 - p) ** 2
        correction = logit_correction(fs.ps_fit.logit_design(data.x), d, p, da * omega + a * (w1 - w0))
        adjust_pistar = np.zeros(data.n)
        if estimates_pistar(use):
            coef = float(np.mean(a * pistar_weight_derivative(p, use)))
            adjust_pistar = coef * (d - use.pi_star)
        components = {
            "main": m - point,
            "adjust_firststage": correction,
            "adjust_pistar": adjust_pistar,
        }
        meta["influence"] = "logit_sandwich"
    else:
        parts = ate_influence(data, use, fs.outcome_fits("x"), point)
        components = parts.as_dict()
        meta["influence"] = "efficient"
    influence = components["main"] + components["adjust_firststage"] + components["adjust_pistar"]
    unadjusted = components["main"] + components["adjust_firststage"]
    meta["se_influence_unadjusted"] = float(np.sqrt(variance_of(unadjusted) / data.n))
    diagnostics = {"ps": p, "w_of_x": omega, "ipw_term": a}
    tag = "reweighted" if reweighted else "naive"
    return _finish(Estimand.ATE, f"ate_ipw_{tag}", point, influence, data.n, config, None,
                   components, diagnostics, meta)


# ATT ------------------------------------------------------------------------


def _att_conditioning(
    form: Form,
    data: ObservationSet,
    info: StratificationInfo,
    config: EstimatorConfig | None,
    first_stage: FirstStage | None,
) -> EffectEstimate:
    config = config or EstimatorConfig()
    data, info, fs, trim = _prepare(data, info, config, first_stage, "upper")
    key = "x" if form is Form.REGADJ else "ps"
    mu0 = fs.control_x_mean if form is Form.REGADJ else fs.control_ps_mean
    d = data.d
    point = float(np.sum(d * (data.y - mu0)) / np.sum(d))
    parts = att_influence(data, mu0, fs.ps, point)
    influence = parts["treated"] + parts["adjust_firststage"]
    fits = fs.outcome_fits(key)
    var_formula = att_variance_formula(data, info, fits, point, fs.residual_variances(key))
    meta = _metadata(info, False, fs, trim)
    meta["form"] = form.value
    diagnostics = {"mu0": mu0, "mu1": fits.mu1, "ps": fs.ps}
    return _finish(Estimand.ATT, f"att_{form.value}", point, influence, data.n, config,
                   var_formula, parts, diagnostics, meta)


def att_regadjust(
    data: ObservationSet,
    info: StratificationInfo,
    config: EstimatorConfig | None = None,
    first_stage: FirstStage | None = None,
) -> EffectEstimate:
    """Regression-adjustment ATT: ``sum D (Y - mu0(X)) / sum D``, no weights.

    Raises
    ------
    EmptyArm
        Either arm has no rows.
    OverlapViolation
        Some fitted propensity exceeds ``1 - eps`` under the error policy.
    """
    return _att_conditioning(Form.REGADJ, data, info, config, first_stage)


def att_pscond(
    data: ObservationSet,
    info: StratificationInfo,
    config: EstimatorConfig | None = None,
    first_stage: FirstStage | None = None,
) -> EffectEstimate:
    """Propensity-conditioning ATT: the control regression is fitted on ``pi_star_hat(X)``."""
    if data.k == 0:
        raise DimensionMismatch("propensity conditioning needs at least one covariate")
    return _att_conditioning(Form.PSCOND, data, info, config, first_stage)


def att_ipw(
    data: ObservationSet,
    info: StratificationInfo,
    config: EstimatorConfig | None = None,
    first_stage: FirstStage | None = None,
) -> EffectEstimate:
    """Inverse-propensity ATT: ``mean(D Y - (1 - D) Y p / (1 - p)) / mean(D)``.

    Controls are weighted by the fitted sample odds so that they mimic the
    treated covariate law.
    """
    config = config or EstimatorConfig()
    data, info, fs, trim = _prepare(data, info, config, first_stage, "upper")
    d, y, p = data.d, data.y, fs.ps
    share = data.treated_fraction
    odds = p / (1.0 - p)
    m = d * y - (1 - d) * y * odds
    point = float(np.mean(m) / share)

    meta = _metadata(info, False, fs, trim)
    meta["form"] = Form.IPW.value
    if fs.smoother.propensity == "logit":
        dm = -(1 - d) * y / (1.0 - p) ** 2
        components = {
            "main": (m - point * d) / share,
            "adjust_firststage": logit_correction(fs.ps_fit.logit_design(data.x), d, p, dm) / share,
        }
        meta["influence"] = "logit_sandwich"
    else:
        components = att_influence(data, fs.control_x_mean, p, point)
        meta["influence"] = "efficient"
    influence = sum(components.values())
    diagnostics = {"ps": p, "odds": odds}
    return _finish(Estimand.ATT, "att_ipw", point, influence, data.n, config, None,
                   components, diagnostics, meta)


_DISPATCH: dict[tuple[Estimand, Form], Callable[..., EffectEstimate]] = {
    (Estimand.ATT, Form.REGADJ): att_regadjust,
    (Estimand.ATT, Form.PSCOND): att_pscond,
    (Estimand.ATT, Form.IPW): att_ipw,
}
_ATE = {Form.REGADJ: ate_regadjust, Form.PSCOND: ate_pscond, Form.IPW: ate_ipw}


def run_estimator(
    spec: EstimatorSpec,
    data: ObservationSet,
    info: StratificationInfo,
    config: EstimatorConfig | None = None,
    first_stage: FirstStage | None = None,
) -> EffectEstimate:
    """Dispatch on an :class:`EstimatorSpec`.

    ``spec.pi_star_mode`` overrides the mode in ``info``: ``Estimated``
    replaces ``pi_star`` by the sample treated fraction.
    """
    if spec.pi_star_mode is PiStarMode.ESTIMATED:
        info = StratificationInfo.estimated(info.pi_pop, data)
    else:
        info = StratificationInfo(info.pi_pop, info.pi_star, PiStarMode.KNOWN)
    if spec.estimand is Estimand.ATE:
        return _ATE[spec.form](data, info, spec.reweighted, config, first_stage)
    return _DISPATCH[(spec.estimand, spec.form)](data, info, config, first_stage)


__all__ = [
    "EstimatorSpec",
    "Form",
    "TrimPolicy",
    "ate_ipw",
    "ate_pscond",
    "ate_regadjust",
    "att_ipw",
    "att_pscond",
    "att_regadjust",
    "run_estimator",
]
