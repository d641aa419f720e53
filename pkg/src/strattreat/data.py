"""Sample data model: observations, stratification facts, and effect estimates."""

from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import numpy.typing as npt

from .errors import DomainError, EmptyArm, InvalidValue, SchemaMismatch

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _binary(values: np.ndarray, name: str) -> IntArray:
    values = np.asarray(values)
    if values.dtype.kind == "f" and not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise InvalidValue(f"{name} is not finite at row {bad + 1}", row=bad + 1)
    ok = (values == 0) | (values == 1)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise InvalidValue(
            f"{name} must be coded 0/1, got {values[bad]!r} at row {bad + 1}",
            row=bad + 1,
        )
    return values.astype(np.int64)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """A stratified sample of outcomes, treatments, covariates and an optional instrument.

    Arrays are copied and made read-only on construction. ``x`` always has
    shape ``(n, k)``; ``k = 0`` is allowed.
    """

    y: FloatArray
    d: IntArray
    x: FloatArray
    z: IntArray | None = None
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        n = y.shape[0]
        if n < 1:
            raise InvalidValue("an ObservationSet needs at least one row")
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise InvalidValue(f"outcome is not finite at row {bad + 1}", row=bad + 1)
        d = _binary(np.asarray(self.d).reshape(-1), "treatment")
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size else np.empty((n, 0))
        if x.ndim != 2 or x.shape[0] != n or d.shape[0] != n:
            raise InvalidValue("y, d and x must have the same number of rows")
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(x), axis=1))[0])
            raise InvalidValue(f"covariate is not finite at row {bad + 1}", row=bad + 1)
        z = None
        if self.z is not None:
            z = _binary(np.asarray(self.z).reshape(-1), "instrument")
            if z.shape[0] != n:
                raise InvalidValue("instrument length does not match outcome")
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise InvalidValue("covariate_names does not match the covariate count")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "d", _frozen(d))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "z", None if z is None else _frozen(z))
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def k(self) -> int:
        return int(self.x.shape[1])

    @property
    def n_treated(self) -> int:
        return int(self.d.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    @property
    def treated_fraction(self) -> float:
        return float(np.mean(self.d))

    @property
    def fingerprint(self) -> str:
        """Content hash identifying this sample (used as a training reference)."""
        h = hashlib.sha1()
        for a in (self.y, self.d, self.x) + (() if self.z is None else (self.z,)):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def require_arms(self) -> None:
        if self.n < 2:
            raise EmptyArm("two-arm estimation needs at least two rows")
        if self.n_treated == 0:
            raise EmptyArm("treated arm is empty")
        if self.n_control == 0:
            raise EmptyArm("control arm is empty")

    def arm(self, value: int) -> npt.NDArray[np.bool_]:
        return self.d == value

    def subset(self, mask: npt.NDArray[np.bool_]) -> "ObservationSet":
        return ObservationSet(
            y=self.y[mask],
            d=self.d[mask],
            x=self.x[mask],
            z=None if self.z is None else self.z[mask],
            covariate_names=self.covariate_names,
        )


class PiStarMode(str, enum.Enum):
    KNOWN = "known"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class StratificationInfo:
    """Population treated fraction ``pi_pop`` and sample treated fraction ``pi_star``."""

    pi_pop: float
    pi_star: float
    pi_star_mode: PiStarMode = PiStarMode.KNOWN

    def __post_init__(self) -> None:
        for name in ("pi_pop", "pi_star"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and 0.0 < float(v) < 1.0):
                raise DomainError(f"{name} must lie strictly inside (0, 1), got {v!r}")
            object.__setattr__(self, name, float(v))
        object.__setattr__(self, "pi_star_mode", PiStarMode(self.pi_star_mode))

    @classmethod
    def known(cls, pi_pop: float, pi_star: float) -> "StratificationInfo":
        return cls(pi_pop, pi_star, PiStarMode.KNOWN)

    @classmethod
    def estimated(cls, pi_pop: float, data: ObservationSet) -> "StratificationInfo":
        """Use the sample treated fraction ``mean(d)`` as ``pi_star``."""
        return cls(pi_pop, data.treated_fraction, PiStarMode.ESTIMATED)

    @property
    def stratified(self) -> bool:
        return self.pi_pop != self.pi_star

    def naive(self) -> "StratificationInfo":
        """The same sample treated as if it were a random sample (``pi_pop = pi_star``).

        Naive estimators are the reweighted ones evaluated at this info, so the
        arm weights are exactly 1.
        """
        return StratificationInfo(self.pi_star, self.pi_star, PiStarMode.KNOWN)


class Estimand(str, enum.Enum):
    ATE = "ATE"
    ATT = "ATT"
    LATE = "LATE"


@dataclass
class EffectEstimate:
    """Point estimate with standard error, normal confidence interval and influence values.

    ``se`` is the headline standard error. Alternative routes are kept in
    ``se_formula`` (plug-in asymptotic variance formula) and ``se_influence``
    (empirical variance of the influence values) when they exist.
    """

    estimand: Estimand
    method: str
    point: float
    se: float
    ci_low: float
    ci_high: float
    n: int
    level: float = 0.95
    influence: FloatArray = field(default_factory=lambda: np.empty(0))
    se_formula: float | None = None
    se_influence: float | None = None
    components: dict[str, FloatArray] = field(default_factory=dict)
    diagnostics: dict[str, FloatArray] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.estimand = Estimand(self.estimand)
        if not self.se >= 0:
            raise DomainError(f"standard error must be nonnegative, got {self.se}")

    def variance_shares(self) -> dict[str, float]:
        """Share of the influence-value variance carried by each component."""
        if not self.components or self.influence.size == 0:
            return {}
        total = float(np.var(self.influence))
        if total == 0:
            return {name: 0.0 for name in self.components}
        return {name: float(np.var(c)) / total for name, c in self.components.items()}

    def to_dict(self, include_influence: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "estimand": self.estimand.value,
            "method": self.method,
            "point": self.point,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "level": self.level,
            "n": self.n,
            "se_formula": self.se_formula,
            "se_influence": self.se_influence,
        }
        if self.se_formula and self.se_influence:
            out["se_ratio_formula_to_influence"] = self.se_formula / self.se_influence
        shares = self.variance_shares()
        if shares:
            out["variance_shares"] = shares
        if self.metadata:
            out["metadata"] = self.metadata
        if include_influence:
            out["influence"] = self.influence.tolist()
        return out


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV header names onto the roles of an :class:`ObservationSet`."""

    outcome: str
    treatment: str
    covariates: Sequence[str] = ()
    instrument: str | None = None

    @property
    def columns(self) -> list[str]:
        cols = [self.outcome, self.treatment, *self.covariates]
        if self.instrument is not None:
            cols.append(self.instrument)
        return cols


def _parse_float(text: str, column: str, row: int) -> float:
    if text is None or text.strip() == "":
        raise InvalidValue(f"missing value in column {column!r} at row {row}", row=row)
    try:
        v = float(text)
    except ValueError:
        raise InvalidValue(
            f"non-numeric value {text!r} in column {column!r} at row {row}", row=row
        ) from None
    if not math.isfinite(v):
        raise InvalidValue(f"non-finite value in column {column!r} at row {row}", row=row)
    return v


def _parse_binary(text: str, column: str, row: int) -> int:
    v = _parse_float(text, column, row)
    if v not in (0.0, 1.0):
        raise InvalidValue(
            f"column {column!r} must be 0 or 1, got {text.strip()!r} at row {row}", row=row
        )
    return int(v)


def ingest_csv(path: str | Path, schema: ColumnSchema) -> ObservationSet:
    """Read and validate a CSV file with a header row.

    Rows are numbered from 1, counting data rows only. Any missing or invalid
    mapped field rejects the whole file with an error naming the row.

    Raises
    ------
    FileNotFoundError
        ``path`` does not exist.
    SchemaMismatch
        A mapped column is absent from the header.
    InvalidValue
        Non-binary treatment or instrument, non-numeric or non-finite value,
        or a missing field.
    EmptyArm
        One treatment arm has no rows.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise SchemaMismatch(f"columns not found in {path.name}: {', '.join(missing)}")
        ys, ds, xs, zs = [], [], [], []
        for row, rec in enumerate(reader, start=1):
            ys.append(_parse_float(rec[schema.outcome], schema.outcome, row))
            ds.append(_parse_binary(rec[schema.treatment], schema.treatment, row))
            xs.append([_parse_float(rec[c], c, row) for c in schema.covariates])
            if schema.instrument is not None:
                zs.append(_parse_binary(rec[schema.instrument], schema.instrument, row))
    if not ys:
        raise InvalidValue(f"{path.name} has no data rows")
    d = np.array(ds, dtype=np.int64)
    if d.sum() == 0:
        raise EmptyArm("treated arm is empty")
    if d.sum() == d.size:
        raise EmptyArm("control arm is empty")
    return ObservationSet(
        y=np.array(ys),
        d=d,
        x=np.array(xs, dtype=np.float64).reshape(len(ys), len(schema.covariates)),
        z=np.array(zs, dtype=np.int64) if schema.instrument is not None else None,
        covariate_names=tuple(schema.covariates),
    )


def write_csv(data: ObservationSet, path: str | Path, schema: ColumnSchema | None = None) -> None:
    """Write ``data`` in the format :func:`ingest_csv` reads."""
    if schema is None:
        schema = ColumnSchema(
            "y", "d", data.covariate_names, "z" if data.z is not None else None
        )
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(schema.columns)
        for i in range(data.n):
            row = [repr(float(data.y[i])), int(data.d[i])]
            row += [repr(float(v)) for v in data.x[i]]
            if data.z is not None:
                row.append(int(data.z[i]))
            w.writerow(row)


def _moments(a: FloatArray) -> tuple[float, float]:
    mean = float(np.mean(a)) if a.size else math.nan
    sd = float(np.std(a, ddof=1)) if a.size > 1 else math.nan
    return mean, sd


def summarize(data: ObservationSet) -> dict[str, Any]:
    """Counts, sample treated fraction, and covariate means/sds overall and by arm."""
    out: dict[str, Any] = {
        "n": data.n,
        "n_treated": data.n_treated,
        "n_control": data.n_control,
        "treated_fraction": data.treated_fraction,
    }
    if data.z is not None:
        out["instrument_fraction"] = float(np.mean(data.z))
    if data.k:
        block = {}
        treated, control = data.arm(1), data.arm(0)
        for j, name in enumerate(data.covariate_names):
            col = data.x[:, j]
            m, s = _moments(col)
            m1, s1 = _moments(col[treated])
            m0, s0 = _moments(col[control])
            block[name] = {
                "mean": m,
                "sd": s,
                "mean_treated": m1,
                "sd_treated": s1,
                "mean_control": m0,
                "sd_control": s0,
            }
        out["covariates"] = block
    return out
