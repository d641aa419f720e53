"""Population/sample propensity maps and stratification weights.

Under treatment-stratified sampling every unit in arm ``d`` is
over- or under-represented by a constant factor. Multiplying by

    w = D * pi / pi_star + (1 - D) * (1 - pi) / (1 - pi_star)

turns sample averages into population averages. Conditioning on ``X``
replaces ``D`` by the sample propensity, giving the smoothed weight

    w(X) = pi_star(X) * pi / pi_star + (1 - pi_star(X)) * (1 - pi) / (1 - pi_star),

which is the density ratio of ``X`` between population and sample.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .data import FloatArray, ObservationSet, StratificationInfo
from .errors import ConfigError, DomainError, OverlapViolation

DEFAULT_TRIM_EPS = 0.01


def arm_weights(info: StratificationInfo) -> tuple[float, float]:
    """Return ``(pi / pi_star, (1 - pi) / (1 - pi_star))``; both are exactly 1 when ``pi == pi_star``."""
    return info.pi_pop / info.pi_star, (1.0 - info.pi_pop) / (1.0 - info.pi_star)


def _check_open_unit(p: npt.ArrayLike, name: str) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64)
    if not np.all((a > 0.0) & (a < 1.0)):
        raise DomainError(f"{name} must lie strictly inside (0, 1)")
    return a


def _tilt(p: np.ndarray, r1: float, r0: float) -> np.ndarray:
    # p*r1 / (p*r1 + (1-p)*r0), divided through by the larger ratio
    if r1 >= r0:
        return p / (p + (1.0 - p) * (r0 / r1))
    a = p * (r1 / r0)
    return a / (a + (1.0 - p))


def population_propensity(ps_sample: npt.ArrayLike, info: StratificationInfo) -> float | FloatArray:
    """Map the sample propensity ``pi_star(x)`` to the population propensity ``pi(x)``.

    Examples
    --------
    >>> info = StratificationInfo.known(pi_pop=0.2, pi_star=0.5)
    >>> round(population_propensity(0.5, info), 12)
    0.2
    """
    p = _check_open_unit(ps_sample, "ps_sample")
    r1, r0 = arm_weights(info)
    out = _tilt(p, r1, r0)
    return float(out) if out.ndim == 0 else out


def sample_propensity(ps_pop: npt.ArrayLike, info: StratificationInfo) -> float | FloatArray:
    """Inverse of :func:`population_propensity`: ``pi(x)`` to ``pi_star(x)``."""
    p = _check_open_unit(ps_pop, "ps_pop")
    r1, r0 = arm_weights(info)
    out = _tilt(p, 1.0 / r1, 1.0 / r0)
    return float(out) if out.ndim == 0 else out


def smoothed_weight(ps_sample: npt.ArrayLike, info: StratificationInfo) -> FloatArray:
    """``w(X)`` evaluated at sample propensities; lies between the two arm weights."""
    w1, w0 = arm_weights(info)
    p = np.asarray(ps_sample, dtype=np.float64)
    return w0 + p * (w1 - w0)


@dataclass(frozen=True)
class StratWeights:
    w: FloatArray
    w_treated: float
    w_control: float
    w_of_x: FloatArray | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.w))


def strat_weights(
    data: ObservationSet,
    info: StratificationInfo,
    ps_fit=None,
) -> StratWeights:
    """Per-row stratification weights, plus ``w(X)`` when a sample-propensity fit is given."""
    w1, w0 = arm_weights(info)
    w = np.where(data.d == 1, w1, w0)
    w_of_x = None
    if ps_fit is not None:
        w_of_x = smoothed_weight(ps_fit.predict(data.x), info)
    return StratWeights(w=w, w_treated=w1, w_control=w0, w_of_x=w_of_x)


class TrimPolicy(str, enum.Enum):
    ERROR = "error"
    DROP = "drop"


def overlap_flags(
    ps_sample: FloatArray, eps: float = DEFAULT_TRIM_EPS, sides: str = "both"
) -> npt.NDArray[np.bool_]:
    """Flag rows whose estimated sample propensity lies outside ``[eps, 1 - eps]``.

    ``sides="upper"`` checks only the control-side bound ``pi_star(x) <= 1 - eps``,
    which is all the ATT estimators need.
    """
    if not 0.0 <= eps < 0.5:
        raise ConfigError(f"trim eps must lie in [0, 0.5), got {eps}")
    p = np.asarray(ps_sample)
    upper = p > 1.0 - eps
    if sides == "upper":
        return upper
    if sides != "both":
        raise ConfigError(f"unknown overlap side {sides!r}")
    return upper | (p < eps)


def enforce_overlap(
    ps_sample: FloatArray,
    eps: float = DEFAULT_TRIM_EPS,
    policy: TrimPolicy | str = TrimPolicy.ERROR,
    sides: str = "both",
) -> npt.NDArray[np.bool_]:
    """Apply the trimming policy and return the mask of rows to keep.

    Raises
    ------
    OverlapViolation
        Under the ``error`` policy when any row is flagged, or under ``drop``
        when nothing would remain.
    """
    flags = overlap_flags(ps_sample, eps, sides)
    policy = TrimPolicy(policy)
    if flags.any() and policy is TrimPolicy.ERROR:
        raise OverlapViolation(
            f"{int(flags.sum())} of {flags.size} rows have estimated propensity outside "
            f"[{eps}, {1 - eps}]"
        )
    keep = ~flags
    if not keep.any():
        raise OverlapViolation("every row violates overlap; nothing left after trimming")
    return keep


def weights_report(data: ObservationSet, info: StratificationInfo, ps_fit=None,
                   eps: float = DEFAULT_TRIM_EPS) -> dict:
    """Arm weight constants and trimming diagnostics, as emitted by the ``weights`` command."""
    sw = strat_weights(data, info, ps_fit)
    out = {
        "pi_pop": info.pi_pop,
        "pi_star": info.pi_star,
        "pi_star_mode": info.pi_star_mode.value,
        "w_treated": sw.w_treated,
        "w_control": sw.w_control,
        "mean_w": sw.mean,
    }
    if ps_fit is not None:
        p = ps_fit.predict(data.x)
        flags = overlap_flags(p, eps)
        out["trim"] = {
            "eps": eps,
            "n_flagged": int(flags.sum()),
            "n_flagged_low": int((p < eps).sum()),
            "n_flagged_high": int((p > 1 - eps).sum()),
            "ps_min": float(p.min()),
            "ps_max": float(p.max()),
        }
        out["w_of_x_range"] = [float(sw.w_of_x.min()), float(sw.w_of_x.max())]
    return out
