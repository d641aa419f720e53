"""Synthetic populations with known effects, and treatment-stratified sampling from them.

Two built-in designs:

``unconfounded_a``
    ``X ~ N(0, 1)``, ``Pr(D = 1 | X) = logistic(X)``, ``Y0 = X + e0``,
    ``Y1 = 1 + 2X + e1``, ``e ~ N(0, 0.5^2)``. CATE is ``1 + X``.
``endogenous_b``
    Always-takers, compliers and never-takers with shares 0.2/0.5/0.3, a
    fair-coin instrument, type baselines 0/1/2 and effects 1/2/0. LATE is 2.

Truths and the probability limits of the naive estimators are computed
independently of the estimators: by Gauss-Kronrod quadrature over the
covariate law for design A and by exact enumeration of the finite
``(type, Z, D)`` cells for design B.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import integrate
from scipy.special import expit

from .data import ObservationSet, StratificationInfo
from .errors import (
    ConfigError,
    DomainError,
    InvalidNoise,
    InvalidShares,
    QuadratureFailure,
    RejectionBudgetExceeded,
)
from .weighting import sample_propensity

QUAD_HALF_WIDTH = 8.0
QUAD_TOL = 1e-8
REJECTION_BUDGET = 1000


class Design(str, enum.Enum):
    UNCONFOUNDED_A = "unconfounded_a"
    ENDOGENOUS_B = "endogenous_b"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, value: "Design | str") -> "Design":
        aliases = {"a": cls.UNCONFOUNDED_A, "b": cls.ENDOGENOUS_B}
        if isinstance(value, str) and value.lower() in aliases:
            return aliases[value.lower()]
        return cls(value)


DEFAULTS_A: dict[str, Any] = {
    "x_mean": 0.0,
    "x_sd": 1.0,
    "ps_coef": (0.0, 1.0),
    "y0_coef": (0.0, 1.0),
    "y1_coef": (1.0, 2.0),
    "noise_sd": (0.5, 0.5),
}

DEFAULTS_B: dict[str, Any] = {
    "shares": (0.2, 0.5, 0.3),
    "p_z": 0.5,
    "baselines": (0.0, 1.0, 2.0),
    "effects": (1.0, 2.0, 0.0),
    "noise_sd": 1.0,
}


@dataclass(frozen=True)
class Truth:
    value: float
    provenance: str


@dataclass(frozen=True)
class DgpSpec:
    design: Design
    parameters: Mapping[str, Any]
    pi_pop: float
    truths: Mapping[str, Truth] = field(default_factory=dict)

    def truth(self, estimand: str) -> float:
        return self.truths[estimand.lower()].value

    def describe(self) -> dict[str, Any]:
        params = {k: v for k, v in self.parameters.items() if not callable(v)}
        return {
            "design": self.design.value,
            "parameters": {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()},
            "pi_pop": self.pi_pop,
            "truths": {k: {"value": t.value, "provenance": t.provenance} for k, t in self.truths.items()},
        }


def _quad(f: Callable[[float], float], lo: float, hi: float) -> float:
    val, err = integrate.quad(f, lo, hi, epsabs=QUAD_TOL * 1e-2, epsrel=QUAD_TOL, limit=200)
    if not math.isfinite(val) or err > QUAD_TOL * max(1.0, abs(val)):
        raise QuadratureFailure(f"quadrature error estimate {err:.2e} exceeds tolerance")
    return float(val)


def _normal_expectation(params: Mapping[str, Any], f: Callable[[float], float]) -> float:
    m, s = float(params["x_mean"]), float(params["x_sd"])

    def integrand(x: float) -> float:
        u = (x - m) / s
        return f(x) * math.exp(-0.5 * u * u) / (s * math.sqrt(2.0 * math.pi))

    return _quad(integrand, m - QUAD_HALF_WIDTH * s, m + QUAD_HALF_WIDTH * s)


def _pop_ps(params: Mapping[str, Any], x: float) -> float:
    a0, a1 = params["ps_coef"]
    return float(expit(a0 + a1 * x))


def _cate(params: Mapping[str, Any], x: float) -> float:
    b0, b1 = params["y0_coef"]
    c0, c1 = params["y1_coef"]
    return (c0 - b0) + (c1 - b1) * x


def _make_a(params: dict[str, Any]) -> DgpSpec:
    sd = tuple(float(v) for v in np.broadcast_to(params["noise_sd"], (2,)))
    if min(sd) < 0 or float(params["x_sd"]) <= 0:
        raise InvalidNoise("noise and covariate standard deviations must be nonnegative")
    params["noise_sd"] = sd
    for key in ("ps_coef", "y0_coef", "y1_coef"):
        params[key] = tuple(float(v) for v in params[key])
        if len(params[key]) != 2:
            raise ConfigError(f"{key} needs (intercept, slope)")
    pi_pop = _normal_expectation(params, lambda x: _pop_ps(params, x))
    ate = _cate(params, float(params["x_mean"]))
    att = _normal_expectation(params, lambda x: _pop_ps(params, x) * _cate(params, x)) / pi_pop
    atc = _normal_expectation(params, lambda x: (1 - _pop_ps(params, x)) * _cate(params, x)) / (1 - pi_pop)
    truths = {
        "ate": Truth(ate, "analytic"),
        "att": Truth(att, "quadrature"),
        "atc": Truth(atc, "quadrature"),
    }
    return DgpSpec(Design.UNCONFOUNDED_A, params, pi_pop, truths)


def _make_b(params: dict[str, Any]) -> DgpSpec:
    shares = tuple(float(v) for v in params["shares"])
    if len(shares) != 3 or min(shares) < 0 or abs(sum(shares) - 1.0) > 1e-12:
        raise InvalidShares(f"type shares must be three nonnegative numbers summing to 1, got {shares}")
    if float(params["noise_sd"]) < 0:
        raise InvalidNoise("noise_sd must be nonnegative")
    p_z = float(params["p_z"])
    if not 0 < p_z < 1:
        raise DomainError("instrument probability p_z must lie in (0, 1)")
    params.update(shares=shares, p_z=p_z,
                  baselines=tuple(map(float, params["baselines"])),
                  effects=tuple(map(float, params["effects"])),
                  noise_sd=float(params["noise_sd"]))
    if shares[1] == 0:
        raise InvalidShares("the complier share must be positive for the LATE to exist")
    pi_pop = shares[0] + shares[1] * p_z
    return DgpSpec(Design.ENDOGENOUS_B, params, pi_pop, {"late": Truth(params["effects"][1], "analytic")})


def make_dgp(design: Design | str, parameters: Mapping[str, Any] | None = None) -> DgpSpec:
    """Build a design with its truths filled in.

    For ``custom`` designs ``parameters`` must provide ``sampler`` (a callable
    ``(rng, n) -> ObservationSet``), ``pi_pop`` and optionally ``truths``
    (a mapping of estimand to value).

    Raises
    ------
    InvalidShares
        Design B type shares are negative or do not sum to one.
    InvalidNoise
        A negative standard deviation.
    """
    design = Design.parse(design)
    parameters = dict(parameters or {})
    if design is Design.CUSTOM:
        if not callable(parameters.get("sampler")) or "pi_pop" not in parameters:
            raise ConfigError("custom designs need a 'sampler' callable and 'pi_pop'")
        truths = {k: Truth(float(v), "user") for k, v in parameters.get("truths", {}).items()}
        return DgpSpec(design, parameters, float(parameters["pi_pop"]), truths)
    defaults = DEFAULTS_A if design is Design.UNCONFOUNDED_A else DEFAULTS_B
    unknown = set(parameters) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown parameters for {design.value}: {sorted(unknown)}")
    params = {**defaults, **parameters}
    return _make_a(params) if design is Design.UNCONFOUNDED_A else _make_b(params)


def _draw_a(p: Mapping[str, Any], rng: np.random.Generator, n: int):
    x = rng.normal(p["x_mean"], p["x_sd"], size=n)
    a0, a1 = p["ps_coef"]
    d = (rng.random(n) < expit(a0 + a1 * x)).astype(np.int64)
    (b0, b1), (c0, c1) = p["y0_coef"], p["y1_coef"]
    s0, s1 = p["noise_sd"]
    y0 = b0 + b1 * x + s0 * rng.standard_normal(n)
    y1 = c0 + c1 * x + s1 * rng.standard_normal(n)
    y = np.where(d == 1, y1, y0)
    return y, d, x.reshape(-1, 1), None


def _draw_b(p: Mapping[str, Any], rng: np.random.Generator, n: int):
    types = rng.choice(3, size=n, p=p["shares"])
    z = (rng.random(n) < p["p_z"]).astype(np.int64)
    d = np.where(types == 0, 1, np.where(types == 1, z, 0)).astype(np.int64)
    base = np.asarray(p["baselines"])[types]
    eff = np.asarray(p["effects"])[types]
    y = base + eff * d + p["noise_sd"] * rng.standard_normal(n)
    return y, d, np.empty((n, 0)), z


def _draw_arrays(spec: DgpSpec, rng: np.random.Generator, n: int):
    if spec.design is Design.UNCONFOUNDED_A:
        return _draw_a(spec.parameters, rng, n)
    if spec.design is Design.ENDOGENOUS_B:
        return _draw_b(spec.parameters, rng, n)
    data = spec.parameters["sampler"](rng, n)
    return data.y, data.d, data.x, data.z


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_population(spec: DgpSpec, n: int, seed=None) -> ObservationSet:
    """``n`` i.i.d. draws from the population law; deterministic given ``seed``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    y, d, x, z = _draw_arrays(spec, _rng(seed), n)
    return ObservationSet(y=y, d=d, x=x, z=z)


@dataclass(frozen=True)
class StratifiedDraw:
    data: ObservationSet
    info: StratificationInfo
    seed: Any
    population_draws: int
    population_snapshot: ObservationSet | None = None


def stratify(
    spec: DgpSpec,
    n: int,
    pi_star_target: float,
    seed=None,
    exact: bool = True,
    keep_population: bool = False,
) -> StratifiedDraw:
    """Sample ``n`` units stratified on treatment status.

    Population units are drawn in batches and kept only while their arm is
    still short, which is rejection sampling from the population law given
    ``D = d``. With ``exact=True`` the treated count is ``round(n * pi_star_target)``;
    with ``exact=False`` it is ``Binomial(n, pi_star_target)``, i.e. i.i.d.
    sampling from the stratified law.

    Raises
    ------
    DomainError
        ``pi_star_target`` outside (0, 1) or an arm would be empty.
    RejectionBudgetExceeded
        More than ``1000 * n`` population draws were needed.
    """
    if not 0 < pi_star_target < 1:
        raise DomainError("pi_star_target must lie strictly inside (0, 1)")
    rng = _rng(seed)
    n1 = int(math.floor(n * pi_star_target + 0.5)) if exact else int(rng.binomial(n, pi_star_target))
    n0 = n - n1
    if n1 < 1 or n0 < 1:
        raise DomainError(f"stratification leaves an arm empty (n={n}, treated={n1})")
    need = {1: n1, 0: n0}
    kept: dict[int, list] = {1: [], 0: []}
    pop_parts = []
    budget = REJECTION_BUDGET * n
    used = 0
    batch = max(256, n)
    while need[1] > 0 or need[0] > 0:
        if used >= budget:
            raise RejectionBudgetExceeded(
                f"needed more than {budget} population draws to fill the arms"
            )
        m = min(batch, budget - used)
        y, d, x, z = _draw_arrays(spec, rng, m)
        used += m
        if keep_population:
            pop_parts.append((y, d, x, z))
        for arm in (1, 0):
            if need[arm] <= 0:
                continue
            idx = np.flatnonzero(d == arm)[: need[arm]]
            if idx.size:
                kept[arm].append((y[idx], d[idx], x[idx], None if z is None else z[idx]))
                need[arm] -= idx.size

    def stack(parts, j):
        if parts[0][j] is None:
            return None
        return np.concatenate([p[j] for p in parts])

    parts = kept[1] + kept[0]
    y, d, x, z = (stack(parts, j) for j in range(4))
    order = rng.permutation(n)
    data = ObservationSet(
        y=y[order], d=d[order], x=x[order], z=None if z is None else z[order]
    )
    snapshot = None
    if keep_population:
        snapshot = ObservationSet(*(stack(pop_parts, j) for j in range(4)))
    # exact counts: the realized fraction is the design fraction; binomial: the design probability
    info = StratificationInfo.known(spec.pi_pop, n1 / n if exact else pi_star_target)
    return StratifiedDraw(data, info, seed, used, snapshot)


def random_sample(spec: DgpSpec, n: int, seed=None) -> StratifiedDraw:
    """An unstratified draw, packaged like :func:`stratify` output (``pi_star`` estimated)."""
    data = draw_population(spec, n, seed)
    return StratifiedDraw(data, StratificationInfo.estimated(spec.pi_pop, data), seed, n)


# design B enumeration ------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    prob: float
    z: int
    d: int
    mean_y: float
    var_y: float


def enumerate_cells(spec: DgpSpec) -> list[Cell]:
    """The finite ``(type, Z)`` cells of design B with their population probabilities."""
    if spec.design is not Design.ENDOGENOUS_B:
        raise ConfigError("cell enumeration applies to the endogenous design only")
    p = spec.parameters
    cells = []
    for t in range(3):
        for zval in (0, 1):
            pz = p["p_z"] if zval == 1 else 1.0 - p["p_z"]
            dval = 1 if t == 0 else (zval if t == 1 else 0)
            mu = p["baselines"][t] + p["effects"][t] * dval
            cells.append(Cell(p["shares"][t] * pz, zval, dval, mu, p["noise_sd"] ** 2))
    return cells


def _stratified_cells(spec: DgpSpec, pi_star: float) -> list[Cell]:
    pi = spec.pi_pop
    out = []
    for c in enumerate_cells(spec):
        tilt = pi_star / pi if c.d == 1 else (1 - pi_star) / (1 - pi)
        out.append(Cell(c.prob * tilt, c.z, c.d, c.mean_y, c.var_y))
    return out


def polynomial_moment(cells: list[Cell], coefs: Mapping[tuple[int, int, int], float]) -> float:
    """Exact ``E[phi(Y, Z, D)]`` for ``phi = sum coef * Y^a Z^b D^c`` with ``a <= 2``."""
    total = 0.0
    for c in cells:
        ey = (1.0, c.mean_y, c.mean_y ** 2 + c.var_y)
        for (a, b, k), coef in coefs.items():
            if a > 2:
                raise DomainError("outcome powers above 2 are not supported")
            total += c.prob * coef * ey[a] * (c.z ** b) * (c.d ** k)
    return total


def _wald(cells: list[Cell]) -> float:
    def cond_mean(zval: int, f) -> float:
        num = sum(c.prob * f(c) for c in cells if c.z == zval)
        return num / sum(c.prob for c in cells if c.z == zval)

    reduced = cond_mean(1, lambda c: c.mean_y) - cond_mean(0, lambda c: c.mean_y)
    first = cond_mean(1, lambda c: c.d) - cond_mean(0, lambda c: c.d)
    return reduced / first


# oracle limits ---------------------------------------------------------------


def _sample_expectation_a(spec: DgpSpec, pi_star: float, f: Callable[[float, int], float]) -> float:
    """``E*[f(X, D)]`` under the stratified law, by quadrature over the population ``X`` law."""
    p, pi = spec.parameters, spec.pi_pop

    def g(x: float) -> float:
        q = _pop_ps(p, x)
        return pi_star / pi * q * f(x, 1) + (1 - pi_star) / (1 - pi) * (1 - q) * f(x, 0)

    return _normal_expectation(p, g)


def oracle_limits(spec: DgpSpec, pi_star: float) -> dict[str, float]:
    """Probability limits of the naive estimators on a sample stratified to ``pi_star``.

    Design A: ``E*[beta(X)]`` for the naive ATE forms (regression adjustment,
    propensity conditioning and IPW share it) and the ATT, which needs no
    correction. Design B: the naive Wald ratio by exact enumeration.
    """
    if not 0 < pi_star < 1:
        raise DomainError("pi_star must lie strictly inside (0, 1)")
    if spec.design is Design.UNCONFOUNDED_A:
        e_star_x = _sample_expectation_a(spec, pi_star, lambda x, d: x)
        naive = _sample_expectation_a(spec, pi_star, lambda x, d: _cate(spec.parameters, x))
        return {
            "ate": spec.truth("ate"),
            "att": spec.truth("att"),
            "naive_ate": naive,
            "naive_att": spec.truth("att"),
            "sample_mean_x": e_star_x,
        }
    if spec.design is Design.ENDOGENOUS_B:
        cells = _stratified_cells(spec, pi_star)
        return {
            "late": spec.truth("late"),
            "naive_wald": _wald(cells),
            "population_wald": _wald(enumerate_cells(spec)),
        }
    raise ConfigError("oracle limits are unavailable for custom designs")


def oracle_variances(spec: DgpSpec, pi_star: float) -> dict[str, float]:
    """Asymptotic variances of ``sqrt(n)`` times the reweighted estimators on design A, by quadrature.

    ``ate_known`` is the variance when ``pi_star`` is known; ``ate_estimated``
    adds the effect of estimating it by ``mean(d)``; ``att`` is the ATT
    variance. ``pistar_term`` is ``A^2 pi_star (1 - pi_star)``, the amount
    by which the two ATE variances differ.
    """
    if spec.design is not Design.UNCONFOUNDED_A:
        raise ConfigError("oracle variances are implemented for design A only")
    p, pi = spec.parameters, spec.pi_pop
    info = StratificationInfo.known(pi, pi_star)
    r1, r0 = pi / pi_star, (1 - pi) / (1 - pi_star)
    s0, s1 = p["noise_sd"]
    beta, gamma = spec.truth("ate"), spec.truth("att")

    def ps_star(x: float) -> float:
        return float(sample_propensity(_pop_ps(p, x), info))

    def w_of_x(x: float) -> float:
        q = ps_star(x)
        return q * r1 + (1 - q) * r0

    def ate_term(x: float, d: int) -> float:
        b = _cate(p, x)
        w = r1 if d == 1 else r0
        q, wx = ps_star(x), w_of_x(x)
        return (w * b - beta) ** 2 + wx ** 2 * s1 ** 2 / q + wx ** 2 * s0 ** 2 / (1 - q)

    def att_term(x: float, d: int) -> float:
        q = ps_star(x)
        return (q * (_cate(p, x) - gamma) ** 2 + q * s1 ** 2 + q ** 2 * s0 ** 2 / (1 - q)) / pi_star ** 2

    def adjust_kernel(x: float, d: int) -> float:
        q = ps_star(x)
        return (-q * pi / pi_star ** 2 + (1 - q) * (1 - pi) / (1 - pi_star) ** 2) * _cate(p, x)

    ate_known = _sample_expectation_a(spec, pi_star, ate_term)
    a_bar = _sample_expectation_a(spec, pi_star, adjust_kernel)

    def ate_term_estimated(x: float, d: int) -> float:
        w = r1 if d == 1 else r0
        main = w * _cate(p, x) - beta + a_bar * (d - pi_star)
        return ate_term(x, d) - (w * _cate(p, x) - beta) ** 2 + main ** 2

    return {
        "ate_known": ate_known,
        "ate_estimated": _sample_expectation_a(spec, pi_star, ate_term_estimated),
        "pistar_term": a_bar ** 2 * pi_star * (1 - pi_star),
        "pistar_coefficient": a_bar,
        "att": _sample_expectation_a(spec, pi_star, att_term),
    }
