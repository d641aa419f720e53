"""Monte Carlo driver: repeated stratified draws, every listed estimator on each.

Replication ``r`` draws its sample from the ``r``-th child of
``numpy.random.SeedSequence(seed)``, so results do not depend on the order
or the degree of parallelism in which replications run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .data import PiStarMode
from .errors import AllReplicationsFailed, ConfigError, StratError
from .estimators import EstimatorSpec, run_estimator
from .firststage import EstimatorConfig, FirstStage
from .late import estimate_late
from .simulation import DgpSpec, Design, make_dgp, random_sample, stratify

SAMPLING = ("stratified", "binomial", "random")
LATE_NAMES = ("late_wald_naive", "late_wald_reweighted")


@dataclass(frozen=True)
class MonteCarloConfig:
    """A Monte Carlo study.

    Estimator names follow :meth:`EstimatorSpec.parse` (``ate_regadj_reweighted``,
    ``att_pscond``, ...) or are ``late_wald_naive`` / ``late_wald_reweighted``.
    A ``:estimated`` suffix runs the estimator with ``pi_star`` replaced by
    the sample treated fraction.
    """

    design: str = "unconfounded_a"
    n: int = 4000
    replications: int = 100
    pi_star: float = 0.8
    estimators: tuple[str, ...] = ("ate_regadj_naive", "ate_regadj_reweighted")
    seed: int = 0
    sampling: str = "stratified"
    parameters: Mapping[str, Any] = field(default_factory=dict)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    n_jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "design", Design.parse(self.design).value)
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0 < self.pi_star < 1:
            raise ConfigError("pi_star must lie strictly inside (0, 1)")
        if self.sampling not in SAMPLING:
            raise ConfigError(f"sampling must be one of {SAMPLING}")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        for name in self.estimators:
            parse_estimator(name)
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("estimator names must be unique")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MonteCarloConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown Monte Carlo config keys: {sorted(unknown)}")
        if "estimator" in d:
            d["estimator"] = EstimatorConfig.from_dict(d["estimator"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "design": self.design,
            "n": self.n,
            "replications": self.replications,
            "pi_star": self.pi_star,
            "estimators": list(self.estimators),
            "seed": self.seed,
            "sampling": self.sampling,
            "parameters": {k: list(v) if isinstance(v, tuple) else v for k, v in self.parameters.items()},
            "estimator": self.estimator.to_dict(),
            "n_jobs": self.n_jobs,
        }


def parse_estimator(name: str) -> EstimatorSpec | str:
    """An :class:`EstimatorSpec`, or the LATE name itself."""
    base, _, mode = name.partition(":")
    if mode not in ("", "known", "estimated"):
        raise ConfigError(f"unknown pi_star mode suffix in {name!r}")
    if base in LATE_NAMES:
        if mode:
            raise ConfigError("LATE estimators take no pi_star mode suffix")
        return base
    return EstimatorSpec.parse(base, PiStarMode(mode or "known"))


@dataclass
class EstimatorRow:
    estimator: str
    estimand: str
    truth: float | None
    mean_point: float | None
    bias: float | None
    mc_sd: float | None
    mean_se: float | None
    se_sd_ratio: float | None
    coverage: float | None
    failures: int
    successes: int
    sd_undefined: bool
    mean_se_unadjusted: float | None = None
    failure_kinds: dict[str, int] = field(default_factory=dict)

    COLUMNS = (
        "estimator", "estimand", "truth", "mean_point", "bias", "mc_sd", "mean_se",
        "se_sd_ratio", "coverage", "failures", "successes", "sd_undefined", "mean_se_unadjusted",
    )

    def to_dict(self) -> dict[str, Any]:
        out = {c: getattr(self, c) for c in self.COLUMNS}
        out["failure_kinds"] = dict(sorted(self.failure_kinds.items()))
        return out


@dataclass
class MonteCarloReport:
    """Aggregated study results.

    ``draws`` keeps the per-replication values (``point``, ``se``,
    ``ci_low``, ``ci_high``, ``se_unadjusted``; NaN where a replication
    failed) for each estimator.
    """

    rows: list[EstimatorRow]
    metadata: dict[str, Any]
    draws: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def row(self, estimator: str) -> EstimatorRow:
        for r in self.rows:
            if r.estimator == estimator:
                return r
        raise KeyError(estimator)


def _estimand_of(name: str) -> str:
    spec = parse_estimator(name)
    return "late" if isinstance(spec, str) else spec.estimand.value.lower()


_FIELDS = ("point", "se", "ci_low", "ci_high", "se_unadjusted")


def _replicate(spec: DgpSpec, config: MonteCarloConfig, child: np.random.SeedSequence) -> dict[str, Any]:
    rng = np.random.default_rng(child)
    if config.sampling == "random":
        draw = random_sample(spec, config.n, rng)
    else:
        draw = stratify(spec, config.n, config.pi_star, rng, exact=config.sampling == "stratified")
    first_stage = FirstStage(draw.data, config.estimator)
    out: dict[str, Any] = {}
    for name in config.estimators:
        parsed = parse_estimator(name)
        try:
            if isinstance(parsed, str):
                est = estimate_late(draw.data, draw.info, parsed.endswith("reweighted"),
                                    config.estimator.level)
            else:
                est = run_estimator(parsed, draw.data, draw.info, config.estimator, first_stage)
        except StratError as exc:
            out[name] = type(exc).__name__
            continue
        out[name] = (
            est.point,
            est.se,
            est.ci_low,
            est.ci_high,
            est.metadata.get("se_influence_unadjusted", math.nan),
        )
    return out


def _summarize(name: str, truth: float | None, values: np.ndarray, kinds: dict[str, int]) -> EstimatorRow:
    ok = ~np.isnan(values[:, 0])
    good = values[ok]
    m = int(ok.sum())
    failures = int(values.shape[0] - m)
    estimand = _estimand_of(name)
    if m == 0:
        return EstimatorRow(name, estimand, truth, None, None, None, None, None, None,
                            failures, 0, True, None, kinds)
    point, se, lo, hi, se_unadj = good.T
    mean_point = float(point.mean())
    bias = None if truth is None else mean_point - truth
    sd_undefined = m < 2
    mc_sd = None if sd_undefined else float(point.std(ddof=1))
    mean_se = float(se.mean())
    ratio = None if sd_undefined or mc_sd == 0 else mean_se / mc_sd
    coverage = None if truth is None else float(np.mean((lo <= truth) & (truth <= hi)))
    unadj = None if np.all(np.isnan(se_unadj)) else float(np.nanmean(se_unadj))
    return EstimatorRow(name, estimand, truth, mean_point, bias, mc_sd, mean_se, ratio, coverage,
                        failures, m, sd_undefined, unadj, kinds)


def run_montecarlo(config: MonteCarloConfig, spec: DgpSpec | None = None) -> MonteCarloReport:
    """Run the study described by ``config``.

    ``spec`` overrides the design named in ``config`` (needed for custom
    designs, whose samplers are Python callables).

    Raises
    ------
    ConfigError
        Invalid configuration.
    AllReplicationsFailed
        Every estimator failed in every replication.
    """
    start = time.perf_counter()
    if spec is None:
        if config.design == Design.CUSTOM.value:
            raise ConfigError("custom designs must be passed as a DgpSpec")
        spec = make_dgp(config.design, config.parameters)
    children = np.random.SeedSequence(config.seed).spawn(config.replications)
    if config.n_jobs == 1:
        results = [_replicate(spec, config, c) for c in children]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=config.n_jobs)(delayed(_replicate)(spec, config, c) for c in children)

    rows: list[EstimatorRow] = []
    draws: dict[str, dict[str, np.ndarray]] = {}
    for name in config.estimators:
        values = np.full((config.replications, len(_FIELDS)), np.nan)
        kinds: dict[str, int] = {}
        for r, res in enumerate(results):
            got = res[name]
            if isinstance(got, str):
                kinds[got] = kinds.get(got, 0) + 1
            else:
                values[r] = got
        truth_key = _estimand_of(name)
        truth = spec.truths[truth_key].value if truth_key in spec.truths else None
        rows.append(_summarize(name, truth, values, kinds))
        draws[name] = {f: values[:, j].copy() for j, f in enumerate(_FIELDS)}
    if all(r.successes == 0 for r in rows):
        raise AllReplicationsFailed("every estimator failed in every replication")
    metadata = {
        "design": spec.design.value,
        "n": config.n,
        "replications": config.replications,
        "pi_pop": spec.pi_pop,
        "pi_star": config.pi_star,
        "seed": config.seed,
        "sampling": config.sampling,
        "config": config.to_dict(),
        "wall_time_s": time.perf_counter() - start,
    }
    return MonteCarloReport(rows=rows, metadata=metadata, draws=draws)


def default_estimators(design: str) -> tuple[str, ...]:
    if Design.parse(design) is Design.ENDOGENOUS_B:
        return LATE_NAMES
    return (
        "ate_regadj_naive",
        "ate_regadj_reweighted",
        "ate_pscond_reweighted",
        "ate_ipw_reweighted",
        "att_regadj",
        "att_pscond",
        "att_ipw",
    )


def config_with(base: MonteCarloConfig, **changes: Any) -> MonteCarloConfig:
    d = {name: getattr(base, name) for name in base.__dataclass_fields__}
    d.update(changes)
    return MonteCarloConfig(**d)


__all__: Sequence[str] = [
    "EstimatorRow",
    "MonteCarloConfig",
    "MonteCarloReport",
    "config_with",
    "default_estimators",
    "parse_estimator",
    "run_montecarlo",
]
