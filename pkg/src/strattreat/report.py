"""Rendering of Monte Carlo reports as text tables, JSON or CSV."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .montecarlo import EstimatorRow, MonteCarloReport

SCHEMA_VERSION = "1.0"


class ReportFormat(str, enum.Enum):
    TEXT = "text"
    JSON = "json"
    CSV = "csv"


def _clean(v: Any) -> Any:
    """JSON-safe scalar: NaN and infinities become ``None``."""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _clean_tree(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_tree(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    return _clean(obj)


def report_to_dict(
    report: MonteCarloReport, include_draws: bool = False, include_timing: bool = False
) -> dict[str, Any]:
    """Plain-data form with a schema version.

    Wall time is left out unless ``include_timing`` so that identical studies
    render to identical bytes.
    """
    meta = dict(report.metadata)
    if not include_timing:
        meta.pop("wall_time_s", None)
    out: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "kind": "montecarlo_report",
        "metadata": meta,
        "rows": [r.to_dict() for r in report.rows],
    }
    if include_draws:
        out["draws"] = report.draws
    return _clean_tree(out)


def report_from_dict(d: dict[str, Any]) -> MonteCarloReport:
    rows = []
    for r in d["rows"]:
        kwargs = {c: r.get(c) for c in EstimatorRow.COLUMNS}
        rows.append(EstimatorRow(**kwargs, failure_kinds=dict(r.get("failure_kinds", {}))))
    draws = {
        name: {k: np.array([np.nan if v is None else v for v in vals], dtype=float) for k, vals in fields.items()}
        for name, fields in d.get("draws", {}).items()
    }
    return MonteCarloReport(rows=rows, metadata=dict(d["metadata"]), draws=draws)


def _fmt(v: Any) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return "NA" if not math.isfinite(v) else f"{v:.4g}"
    return str(v)


TEXT_COLUMNS = ("estimator", "truth", "mean_point", "bias", "mc_sd", "mean_se", "se_sd_ratio",
                "coverage", "failures")


def _text(report: MonteCarloReport) -> str:
    m = report.metadata
    head = (
        f"design={m.get('design')} n={m.get('n')} R={m.get('replications')} "
        f"pi={_fmt(m.get('pi_pop'))} pi*={_fmt(m.get('pi_star'))} seed={m.get('seed')} "
        f"sampling={m.get('sampling')}"
    )
    table = [list(TEXT_COLUMNS)]
    for r in report.rows:
        table.append([_fmt(getattr(r, c)) for c in TEXT_COLUMNS])
    widths = [max(len(row[j]) for row in table) for j in range(len(TEXT_COLUMNS))]
    lines = [head]
    for row in table:
        cells = [row[0].ljust(widths[0])] + [row[j].rjust(widths[j]) for j in range(1, len(row))]
        lines.append("  ".join(cells).rstrip())
    if any(r.sd_undefined for r in report.rows):
        lines.append("note: Monte Carlo SD undefined with fewer than two successful replications")
    if "wall_time_s" in m:
        lines.append(f"wall time: {m['wall_time_s']:.1f}s")
    return "\n".join(lines) + "\n"


def _csv(report: MonteCarloReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EstimatorRow.COLUMNS)
    for r in report.rows:
        writer.writerow(["" if v is None else v for v in (_clean(getattr(r, c)) for c in EstimatorRow.COLUMNS)])
    return buf.getvalue()


def emit_report(
    report: MonteCarloReport,
    fmt: ReportFormat | str = ReportFormat.TEXT,
    include_draws: bool = False,
    include_timing: bool = False,
) -> str:
    """Render ``report``.

    JSON output parses back through :func:`load_report` and re-renders to the
    same bytes. CSV has one row per estimator.
    """
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.JSON:
        return json.dumps(report_to_dict(report, include_draws, include_timing), indent=2) + "\n"
    if fmt is ReportFormat.CSV:
        return _csv(report)
    return _text(report)


def load_report(text: str) -> MonteCarloReport:
    return report_from_dict(json.loads(text))


def write_report(report: MonteCarloReport, path: str | Path, fmt: ReportFormat | str, **kwargs: Any) -> None:
    """Write the rendered report; ``OSError`` propagates on I/O failure."""
    Path(path).write_text(emit_report(report, fmt, **kwargs))
