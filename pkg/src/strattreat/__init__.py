"""Treatment-effect estimation from samples stratified on treatment status.

When treated and control units are sampled in fixed proportions ``pi_star``
that differ from the population treated fraction ``pi``, conventional ATE
estimators average the CATE over the wrong covariate law. This package
provides reweighted ATE estimators (regression adjustment, propensity-score
conditioning, IPW), unweighted ATT estimators, naive and reweighted Wald
estimators of the LATE, influence-function inference, and a simulation
harness with quadrature and enumeration oracles.
"""

from .data import (
    ColumnSchema,
    EffectEstimate,
    Estimand,
    ObservationSet,
    PiStarMode,
    StratificationInfo,
    ingest_csv,
    summarize,
    write_csv,
)
from .errors import EstimationError, StratError, ValidationError
from .estimators import (
    EstimatorSpec,
    Form,
    ate_ipw,
    ate_pscond,
    ate_regadjust,
    att_ipw,
    att_pscond,
    att_regadjust,
    run_estimator,
)
from .firststage import EstimatorConfig, FirstStage
from .inference import InfluenceDecomposition, build_confidence_interval
from .late import WaldResult, estimate_late, late_inference, wald_naive, wald_reweighted
from .montecarlo import MonteCarloConfig, MonteCarloReport, run_montecarlo
from .report import emit_report, load_report
from .simulation import make_dgp, oracle_limits, oracle_variances, random_sample, stratify
from .smoother import SmootherConfig, fit_conditional_mean, fit_propensity
from .weighting import (
    TrimPolicy,
    arm_weights,
    population_propensity,
    sample_propensity,
    smoothed_weight,
    strat_weights,
)

__all__ = [
    "ColumnSchema",
    "EffectEstimate",
    "Estimand",
    "EstimationError",
    "EstimatorConfig",
    "EstimatorSpec",
    "FirstStage",
    "Form",
    "InfluenceDecomposition",
    "MonteCarloConfig",
    "MonteCarloReport",
    "ObservationSet",
    "PiStarMode",
    "SmootherConfig",
    "StratError",
    "StratificationInfo",
    "TrimPolicy",
    "ValidationError",
    "WaldResult",
    "arm_weights",
    "ate_ipw",
    "ate_pscond",
    "ate_regadjust",
    "att_ipw",
    "att_pscond",
    "att_regadjust",
    "build_confidence_interval",
    "emit_report",
    "estimate_late",
    "fit_conditional_mean",
    "fit_propensity",
    "ingest_csv",
    "late_inference",
    "load_report",
    "make_dgp",
    "oracle_limits",
    "oracle_variances",
    "population_propensity",
    "random_sample",
    "run_estimator",
    "run_montecarlo",
    "sample_propensity",
    "smoothed_weight",
    "strat_weights",
    "stratify",
    "summarize",
    "wald_naive",
    "wald_reweighted",
    "write_csv",
]
