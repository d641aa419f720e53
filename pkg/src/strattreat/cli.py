"""Command-line interface: ``estimate``, ``simulate``, ``montecarlo`` and ``weights``.

Every subcommand accepts ``--config FILE``, a JSON object whose keys mirror
the long flag names (dashes or underscores). Flags given on the command
line override the file. Exit status is 0 on success, 1 for invalid input
and 2 when estimation fails at run time.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .data import ColumnSchema, ObservationSet, StratificationInfo, ingest_csv, summarize, write_csv
from .errors import ConfigError, EstimationError, StratError, ValidationError
from .estimators import EstimatorSpec, Form, run_estimator
from .firststage import EstimatorConfig
from .late import estimate_late
from .montecarlo import MonteCarloConfig, default_estimators, run_montecarlo
from .report import SCHEMA_VERSION, emit_report
from .simulation import Design, make_dgp, oracle_limits, random_sample, stratify
from .smoother import SmootherConfig, fit_propensity
from .weighting import DEFAULT_TRIM_EPS, weights_report

SMOOTHER_ALIASES = {"nw": "nadaraya_watson", "ll": "local_linear"}

# built-in defaults; used when neither the command line nor the config file sets a value
DEFAULTS: dict[str, Any] = {
    "outcome": "y",
    "treatment": "d",
    "covariates": None,
    "instrument": None,
    "estimand": "ate",
    "form": "regadj",
    "reweighted": False,
    "pi_pop": None,
    "pi_star": None,
    "smoother": "nadaraya_watson",
    "propensity": "logit",
    "logit_degree": 1,
    "bandwidth": None,
    "bandwidth_scale": 1.0,
    "ps_scale": "logit",
    "trim_eps": DEFAULT_TRIM_EPS,
    "trim_policy": "error",
    "level": 0.95,
    "include_influence": False,
    "design": "a",
    "n": 4000,
    "seed": 0,
    "sampling": "stratified",
    "replications": 100,
    "estimators": None,
    "format": "text",
    "n_jobs": 1,
    "include_draws": False,
    "timing": False,
    "parameters": None,
    "data": None,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors are validation errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option values; command-line flags override it")
    p.add_argument("--out", help="output path (default: standard output)")


def _add_estimator_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("first stage")
    g.add_argument("--smoother", choices=["nw", "ll", "nadaraya_watson", "local_linear"])
    g.add_argument("--propensity", choices=["logit", "kernel"])
    g.add_argument("--logit-degree", type=int)
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--bandwidth-scale", type=float, help="multiplier on the rule-of-thumb bandwidth")
    g.add_argument("--ps-scale", choices=["logit", "probability"])
    g.add_argument("--trim-eps", type=float)
    g.add_argument("--trim-policy", choices=["error", "drop"])
    g.add_argument("--level", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="strattreat", description="Treatment effects from samples stratified on treatment.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate an ATE, ATT or LATE from a CSV file",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--data", help="input CSV with a header row")
    p.add_argument("--outcome")
    p.add_argument("--treatment")
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--instrument")
    p.add_argument("--estimand", choices=["ate", "att", "late"])
    p.add_argument("--form", choices=[f.value for f in Form])
    p.add_argument("--reweighted", action="store_true")
    p.add_argument("--pi-pop", type=float, help="population treated fraction")
    p.add_argument("--pi-star", type=float, help="sample treated fraction by design (default: estimated)")
    p.add_argument("--include-influence", action="store_true")
    _add_estimator_options(p)

    p = sub.add_parser("simulate", help="write a stratified draw from a built-in design",
                       argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--design", choices=["a", "b", "A", "B", "unconfounded_a", "endogenous_b"])
    p.add_argument("--n", type=int)
    p.add_argument("--pi-star", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--sampling", choices=["stratified", "binomial", "random"])

    p = sub.add_parser("montecarlo", help="run a Monte Carlo study", argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--design", choices=["a", "b", "A", "B", "unconfounded_a", "endogenous_b"])
    p.add_argument("--n", type=int)
    p.add_argument("--replications", "-R", type=int)
    p.add_argument("--pi-star", type=float)
    p.add_argument("--estimators", help="comma-separated estimator names")
    p.add_argument("--seed", type=int)
    p.add_argument("--sampling", choices=["stratified", "binomial", "random"])
    p.add_argument("--format", choices=["text", "json", "csv"])
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--include-draws", action="store_true")
    p.add_argument("--timing", action="store_true", help="include wall time in JSON output")
    _add_estimator_options(p)

    p = sub.add_parser("weights", help="arm weights and overlap diagnostics", argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--pi-pop", type=float)
    p.add_argument("--pi-star", type=float)
    p.add_argument("--data", help="optional CSV for propensity and trimming diagnostics")
    p.add_argument("--outcome")
    p.add_argument("--treatment")
    p.add_argument("--covariates")
    p.add_argument("--trim-eps", type=float)
    return parser


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in raw.items()}


def resolve_options(args: argparse.Namespace) -> dict[str, Any]:
    """Built-in defaults, then the config file, then explicit flags."""
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    from_file = _load_config(getattr(args, "config", None))
    unknown = set(from_file) - set(DEFAULTS) - {"out"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return {**DEFAULTS, **from_file, **given}


def _split(value: Any) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v) for v in value]


def _estimator_config(o: dict[str, Any]) -> EstimatorConfig:
    smoother = SmootherConfig(
        kind=SMOOTHER_ALIASES.get(o["smoother"], o["smoother"]),
        bandwidth=o["bandwidth"],
        bandwidth_scale=float(o["bandwidth_scale"]),
        propensity=o["propensity"],
        logit_degree=int(o["logit_degree"]),
        ps_scale=o["ps_scale"],
    )
    return EstimatorConfig(smoother=smoother, trim_eps=float(o["trim_eps"]),
                           trim_policy=o["trim_policy"], level=float(o["level"]))


def _schema(o: dict[str, Any], instrument: bool = False) -> ColumnSchema:
    return ColumnSchema(
        outcome=o["outcome"],
        treatment=o["treatment"],
        covariates=tuple(_split(o["covariates"])),
        instrument=o["instrument"] if instrument else None,
    )


def _info(o: dict[str, Any], data: ObservationSet) -> StratificationInfo:
    if o["pi_pop"] is None:
        raise ConfigError("--pi-pop is required")
    if o["pi_star"] is None:
        return StratificationInfo.estimated(float(o["pi_pop"]), data)
    return StratificationInfo.known(float(o["pi_pop"]), float(o["pi_star"]))


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _dump(obj: dict[str, Any]) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, **obj}, indent=2) + "\n"


def cmd_estimate(o: dict[str, Any]) -> None:
    if not o["data"]:
        raise ConfigError("estimate needs --data")
    estimand = o["estimand"].lower()
    if estimand == "late" and not o["instrument"]:
        raise ConfigError("--estimand late needs --instrument")
    data = ingest_csv(o["data"], _schema(o, instrument=estimand == "late"))
    info = _info(o, data)
    config = _estimator_config(o)
    if estimand == "late":
        est = estimate_late(data, info, bool(o["reweighted"]), config.level)
    else:
        spec = EstimatorSpec(estimand.upper(), o["form"], bool(o["reweighted"]), info.pi_star_mode)
        est = run_estimator(spec, data, info, config)
    payload = {"kind": "effect_estimate", **est.to_dict(include_influence=bool(o["include_influence"]))}
    payload["data"] = summarize(data)
    _emit(_dump(payload), o.get("out"))


def cmd_simulate(o: dict[str, Any]) -> None:
    if o.get("out") is None:
        raise ConfigError("simulate needs --out for the CSV file")
    if o["pi_star"] is None and o["sampling"] != "random":
        raise ConfigError("--pi-star is required for stratified sampling")
    spec = make_dgp(o["design"], o["parameters"])
    n, seed = int(o["n"]), int(o["seed"])
    if o["sampling"] == "random":
        draw = random_sample(spec, n, seed)
    else:
        draw = stratify(spec, n, float(o["pi_star"]), seed, exact=o["sampling"] == "stratified")
    out = Path(o["out"])
    write_csv(draw.data, out)
    sidecar = {
        "kind": "simulation",
        "dgp": spec.describe(),
        "n": n,
        "seed": seed,
        "sampling": o["sampling"],
        "pi_pop": draw.info.pi_pop,
        "pi_star": draw.info.pi_star,
        "pi_star_mode": draw.info.pi_star_mode.value,
        "population_draws": draw.population_draws,
        "columns": ColumnSchema("y", "d", draw.data.covariate_names,
                                "z" if draw.data.z is not None else None).columns,
    }
    if o["pi_star"] is not None and spec.design is not Design.CUSTOM:
        sidecar["oracle_limits"] = oracle_limits(spec, float(o["pi_star"]))
    out.with_suffix(".json").write_text(_dump(sidecar))


def cmd_montecarlo(o: dict[str, Any]) -> None:
    design = o["design"]
    estimators = _split(o["estimators"]) or list(default_estimators(design))
    config = MonteCarloConfig(
        design=design,
        n=int(o["n"]),
        replications=int(o["replications"]),
        pi_star=float(o["pi_star"] if o["pi_star"] is not None else 0.8),
        estimators=tuple(estimators),
        seed=int(o["seed"]),
        sampling=o["sampling"],
        parameters=o["parameters"] or {},
        estimator=_estimator_config(o),
        n_jobs=int(o["n_jobs"]),
    )
    report = run_montecarlo(config)
    text = emit_report(report, o["format"], include_draws=bool(o["include_draws"]),
                       include_timing=bool(o["timing"]))
    _emit(text, o.get("out"))


def cmd_weights(o: dict[str, Any]) -> None:
    if o["pi_pop"] is None or o["pi_star"] is None:
        raise ConfigError("weights needs --pi-pop and --pi-star")
    info = StratificationInfo.known(float(o["pi_pop"]), float(o["pi_star"]))
    if o.get("data"):
        data = ingest_csv(o["data"], _schema(o))
        ps_fit = fit_propensity(data) if data.k else None
        body = weights_report(data, info, ps_fit, float(o["trim_eps"]))
    else:
        w1, w0 = info.pi_pop / info.pi_star, (1 - info.pi_pop) / (1 - info.pi_star)
        body = {"pi_pop": info.pi_pop, "pi_star": info.pi_star, "w_treated": w1, "w_control": w0}
    _emit(_dump({"kind": "weights", **body}), o.get("out"))


COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "weights": cmd_weights,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](resolve_options(args))
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 2
    except StratError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
