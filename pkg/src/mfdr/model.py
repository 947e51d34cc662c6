"""Market, preference, and cost primitives shared by every other module.

A consumer's deviation consumption is split across ``d`` electricity usages
(heating, lighting, ...). Drift effort ``a[k]`` lowers the mean deviation of
usage ``k``; volatility effort ``b[k]`` in [b_min, 1] scales its variance
(1 = no effort). Efforts price into a separable instantaneous cost, and the
usage volatilities aggregate with a common weather shock ``sigma_circ`` that
correlates the whole population.

Units are fixed throughout the package: money in pence, power in kW, time in
hours.

All parameter containers are immutable after construction and every function
here is pure, so values can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "ModelParams",
    "ParameterError",
    "validate",
    "calibrated_defaults",
    "with_variance_share",
    "effort_cost",
    "sigma_of",
    "Sigma_of",
    "load_params",
    "params_from_mapping",
    "read_flat_config",
    "MODEL_CONFIG_KEYS",
    "CALIBRATED_TOTAL_STD",
]

#: Calibrated no-effort standard deviation of the deviation consumption,
#: kW·h^(-1/2): sigma(1)^2 + sigma_circ^2 always equals this squared for the
#: calibrated parameter sets, whatever the variance share of the common noise.
CALIBRATED_TOTAL_STD = 0.085


class ParameterError(ValueError):
    """Raised when parameters violate their domain; lists every violation.

    Attributes
    ----------
    violations:
        One human-readable string per violated invariant, each naming the
        offending field and the bound it broke.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ModelParams:
    """All market, preference, and cost constants.

    Attributes
    ----------
    d:
        Number of electricity usages (>= 1).
    rho:
        Per-usage drift-effort efficiency, kW²·h⁻¹·pence⁻¹ (length d, > 0).
    lambda_:
        Per-usage volatility-effort efficiency, kW²·h·pence⁻¹ (length d, > 0).
        The trailing underscore only avoids the Python keyword; the external
        config key is ``lambda``.
    eta:
        Per-usage volatility cost exponent, dimensionless (length d, >= 1).
    sigma:
        Per-usage idiosyncratic volatility, kW·h^(-1/2) (length d, >= 0;
        zero means the usage's deviation is driven by the common noise only,
        the pure-common-noise calibration).
    sigma_circ:
        Common-noise volatility, kW·h^(-1/2) (>= 0).
    a_max:
        Drift-effort cap scale, pence·kW⁻²·h (> 0); usage k's drift effort is
        capped at rho[k]·a_max.
    b_min:
        Volatility-effort floor, in (0, 1).
    r_a:
        Agent CARA risk aversion, pence⁻¹ (> 0).
    r_p:
        Principal CARA risk aversion, pence⁻¹ (>= 0; 0 encodes the
        risk-neutral principal).
    theta:
        Quadratic-variation cost loading, pence·kW⁻²·h⁻¹ (>= 0).
    horizon:
        Contract duration T, hours (> 0).
    x0:
        Initial deviation, kW; the initial population law is a point mass
        at x0.
    delta:
        Linear energy-value-discrepancy slope, pence·kWh⁻¹: consumer marginal
        valuation minus producer marginal cost of deviation is delta·x.
    kappa:
        Agent preference slope, pence·kWh⁻¹: the agent values deviation at
        kappa·x, so the producer's running cost slope is (kappa - delta)·x.
    """

    d: int
    rho: tuple[float, ...]
    lambda_: tuple[float, ...]
    eta: tuple[float, ...]
    sigma: tuple[float, ...]
    sigma_circ: float
    a_max: float
    b_min: float
    r_a: float
    r_p: float
    theta: float
    horizon: float
    x0: float
    delta: float
    kappa: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "d", int(self.d))
        for name in ("rho", "lambda_", "eta", "sigma"):
            raw = getattr(self, name)
            if isinstance(raw, (int, float)):
                raw = (raw,)
            object.__setattr__(self, name, tuple(float(v) for v in raw))
        for name in (
            "sigma_circ",
            "a_max",
            "b_min",
            "r_a",
            "r_p",
            "theta",
            "horizon",
            "x0",
            "delta",
            "kappa",
        ):
            object.__setattr__(self, name, float(getattr(self, name)))

    # ------------------------------------------------------------------
    # Derived constants
    # ------------------------------------------------------------------
    @property
    def rho_bar(self) -> float:
        """Aggregate drift responsiveness: the sum of rho[k]."""
        return sum(self.rho)

    @property
    def lambda_bar(self) -> float:
        """Largest volatility-effort efficiency: max of lambda[k]."""
        return max(self.lambda_)

    @property
    def r_bar(self) -> float:
        """Harmonic risk ratio: 1/r_bar = 1/r_a + 1/r_p, and 0 when r_p = 0."""
        if self.r_p == 0.0:
            return 0.0
        return (self.r_a * self.r_p) / (self.r_a + self.r_p)


def validate(params: ModelParams) -> ModelParams:
    """Check every domain invariant; return the params or raise ParameterError.

    All violations are collected and reported together, each naming the field
    and the violated bound.
    """
    v: list[str] = []
    if params.d < 1:
        v.append(f"d = {params.d}: must be a positive integer")
    for name in ("rho", "lambda_", "eta", "sigma"):
        vec = getattr(params, name)
        if len(vec) != params.d:
            v.append(f"{name}: expected {params.d} entries, got {len(vec)}")
    for k, value in enumerate(params.rho):
        if not value > 0.0:
            v.append(f"rho[{k}] = {value}: must be > 0")
    for k, value in enumerate(params.lambda_):
        if not value > 0.0:
            v.append(f"lambda[{k}] = {value}: must be > 0")
    for k, value in enumerate(params.eta):
        if not value >= 1.0:
            v.append(f"eta[{k}] = {value}: must be >= 1")
    for k, value in enumerate(params.sigma):
        if not value >= 0.0:
            v.append(f"sigma[{k}] = {value}: must be >= 0")
    if not params.sigma_circ >= 0.0:
        v.append(f"sigma_circ = {params.sigma_circ}: must be >= 0")
    if not params.a_max > 0.0:
        v.append(f"a_max = {params.a_max}: must be > 0")
    if not 0.0 < params.b_min < 1.0:
        v.append(f"b_min = {params.b_min}: must lie in (0, 1)")
    if not params.r_a > 0.0:
        v.append(f"r_a = {params.r_a}: must be > 0")
    if not params.r_p >= 0.0:
        v.append(f"r_p = {params.r_p}: must be >= 0")
    if not params.theta >= 0.0:
        v.append(f"theta = {params.theta}: must be >= 0")
    if not params.horizon > 0.0:
        v.append(f"horizon = {params.horizon}: must be > 0")
    for name in ("x0", "delta", "kappa"):
        if not math.isfinite(getattr(params, name)):
            v.append(f"{name} = {getattr(params, name)}: must be finite")
    if v:
        raise ParameterError(v)
    return params


def calibrated_defaults(variance_share: float = 0.5) -> ModelParams:
    """Reference-calibrated parameters for a single aggregated usage.

    ``variance_share`` is the fraction of the no-effort variance carried by
    the common noise: sigma_circ² = share·0.085² and sigma² = (1-share)·0.085²,
    so the total no-effort variance is 0.085² for every share.

    Defaults that the calibration study leaves open: a_max = 2·|delta|·horizon
    (keeps the drift cap slack on the whole calibrated range), b_min = 0.01
    (never binds at calibrated rates), x0 = 0.
    """
    share = float(variance_share)
    if not 0.0 <= share <= 1.0:
        raise ParameterError(
            [f"variance_share = {share}: must lie in [0, 1]"]
        )
    horizon = 5.5
    delta = -55.44
    total_var = CALIBRATED_TOTAL_STD**2
    sigma = math.sqrt((1.0 - share) * total_var)
    sigma_circ = math.sqrt(share * total_var)
    return ModelParams(
        d=1,
        rho=(9.3e-5,),
        lambda_=(2.8e-2,),
        eta=(1.0,),
        sigma=(sigma,),
        sigma_circ=sigma_circ,
        a_max=2.0 * abs(delta) * horizon,
        b_min=0.01,
        r_a=5.7e-3,
        r_p=6e-3,
        theta=4e-3,
        horizon=horizon,
        x0=0.0,
        delta=delta,
        kappa=11.76,
    )


def with_variance_share(params: ModelParams, variance_share: float) -> ModelParams:
    """Re-split the total no-effort variance between the noise sources.

    The total rate ``sum(sigma[k]^2) + sigma_circ^2`` is preserved;
    ``variance_share`` of it moves to the common noise and the rest stays
    idiosyncratic, with the usage profile ``sigma`` rescaled proportionally.
    When the input has no idiosyncratic variance the profile cannot be
    inferred, so a single-usage model rebuilds it directly and a multi-usage
    model raises ParameterError.
    """
    validate(params)
    share = float(variance_share)
    if not 0.0 <= share <= 1.0:
        raise ParameterError(
            [f"variance_share = {share}: must lie in [0, 1]"]
        )
    idio_var = sum(s**2 for s in params.sigma)
    total_var = idio_var + params.sigma_circ**2
    if total_var <= 0.0:
        raise ParameterError(
            ["cannot re-split variance: total variance rate is zero"]
        )
    sigma_circ = math.sqrt(share * total_var)
    if idio_var > 0.0:
        factor = math.sqrt((1.0 - share) * total_var / idio_var)
        sigma = tuple(s * factor for s in params.sigma)
    elif params.d == 1:
        sigma = (math.sqrt((1.0 - share) * total_var),)
    else:
        raise ParameterError(
            [
                "cannot re-split variance: all sigma[k] are zero, so the "
                "usage profile is undefined for d > 1"
            ]
        )
    return replace(params, sigma=sigma, sigma_circ=sigma_circ)


def _check_effort_domain(
    a: np.ndarray | None, b: np.ndarray | None, params: ModelParams
) -> list[str]:
    problems: list[str] = []
    if a is not None:
        if a.shape != (params.d,):
            problems.append(f"a: expected {params.d} entries, got {a.shape}")
        else:
            caps = np.asarray(params.rho) * params.a_max
            for k in range(params.d):
                if not 0.0 <= a[k] <= caps[k]:
                    problems.append(
                        f"a[{k}] = {a[k]}: must lie in [0, rho[{k}]*a_max = {caps[k]}]"
                    )
    if b is not None:
        if b.shape != (params.d,):
            problems.append(f"b: expected {params.d} entries, got {b.shape}")
        else:
            for k in range(params.d):
                if not params.b_min <= b[k] <= 1.0:
                    problems.append(
                        f"b[{k}] = {b[k]}: must lie in [b_min = {params.b_min}, 1]"
                    )
    return problems


def effort_cost(
    a: Sequence[float] | np.ndarray,
    b: Sequence[float] | np.ndarray,
    params: ModelParams,
) -> float:
    """Instantaneous effort cost rate c(a, b) in pence per hour.

    c = ½·Σ_k a[k]²/rho[k]  +  ½·Σ_k sigma[k]²/(lambda[k]·eta[k])·(b[k]^(-eta[k]) - 1)

    Nonnegative on the admissible boxes, zero exactly at no effort
    (a = 0, b = 1), strictly increasing in each a[k] and strictly decreasing
    in each b[k].
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    problems = _check_effort_domain(a_arr, b_arr, params)
    if problems:
        raise ParameterError(problems)
    rho = np.asarray(params.rho)
    lam = np.asarray(params.lambda_)
    eta = np.asarray(params.eta)
    sig2 = np.asarray(params.sigma) ** 2
    c_alpha = float(np.sum(a_arr**2 / rho))
    c_beta = float(np.sum(sig2 / (lam * eta) * (b_arr ** (-eta) - 1.0)))
    return 0.5 * (c_alpha + c_beta)


def sigma_of(b: Sequence[float] | np.ndarray, params: ModelParams) -> np.ndarray:
    """Per-usage volatility vector under effort b: (sigma[k]·sqrt(b[k]))_k."""
    b_arr = np.asarray(b, dtype=float)
    problems = _check_effort_domain(None, b_arr, params)
    if problems:
        raise ParameterError(problems)
    return np.asarray(params.sigma) * np.sqrt(b_arr)


def Sigma_of(b: Sequence[float] | np.ndarray, params: ModelParams) -> float:
    """Aggregate idiosyncratic variance rate under effort b: Σ_k sigma[k]²·b[k].

    Monotone nondecreasing in every b[k]; ranges over
    [b_min·Sigma_of(1), Sigma_of(1)] on the admissible box.
    """
    vec = sigma_of(b, params)
    return float(np.sum(vec**2))


# ----------------------------------------------------------------------
# Flat-text configuration
# ----------------------------------------------------------------------

#: Config keys owned by the model, exactly the ModelParams field names (with
#: ``lambda`` spelled without the keyword-avoiding underscore).
MODEL_CONFIG_KEYS = (
    "d",
    "rho",
    "lambda",
    "eta",
    "sigma",
    "sigma_circ",
    "a_max",
    "b_min",
    "r_a",
    "r_p",
    "theta",
    "horizon",
    "x0",
    "delta",
    "kappa",
)

_LIST_KEYS = {"rho", "lambda", "eta", "sigma"}
_INT_KEYS = {"d"}


def read_flat_config(path: str | Path) -> dict[str, str]:
    """Read a flat ``key = value`` text file into an ordered mapping.

    Lines hold one ``key = value`` pair each; ``#`` and ``;`` start comments;
    a leading ``[section]`` header is permitted but ignored. Duplicate keys
    are errors.
    """
    import configparser

    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    parser.optionxform = str  # keys are case-sensitive, exactly as written
    if not text.lstrip().startswith("["):
        text = "[config]\n" + text
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ParameterError([f"config file {path}: {exc}"]) from exc
    mapping: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in mapping:
                raise ParameterError([f"config file {path}: duplicate key {key!r}"])
            mapping[key] = value
    return mapping


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ParameterError([f"{key} = {raw!r}: not a number"]) from exc


def _parse_float_list(key: str, raw: str) -> tuple[float, ...]:
    items = [piece.strip() for piece in raw.split(",") if piece.strip() != ""]
    if not items:
        raise ParameterError([f"{key} = {raw!r}: empty list"])
    return tuple(_parse_float(key, piece) for piece in items)


def params_from_mapping(
    mapping: Mapping[str, str], base: ModelParams | None = None
) -> ModelParams:
    """Build validated ModelParams from flat-text key/value pairs.

    Keys must be ModelParams field names (``lambda`` for the volatility
    efficiency). Missing keys keep the value from ``base`` (calibrated
    defaults if no base is given); unknown keys are errors.
    """
    params = base if base is not None else calibrated_defaults()
    unknown = [key for key in mapping if key not in MODEL_CONFIG_KEYS]
    if unknown:
        raise ParameterError(
            [f"unknown parameter key {key!r}" for key in sorted(unknown)]
        )
    updates: dict[str, object] = {}
    for key, raw in mapping.items():
        field = "lambda_" if key == "lambda" else key
        if key in _INT_KEYS:
            try:
                updates[field] = int(raw)
            except ValueError as exc:
                raise ParameterError([f"{key} = {raw!r}: not an integer"]) from exc
        elif key in _LIST_KEYS:
            updates[field] = _parse_float_list(key, raw)
        else:
            updates[field] = _parse_float(key, raw)
    return validate(replace(params, **updates))


def load_params(path: str | Path) -> ModelParams:
    """Load validated ModelParams from a flat-text config file.

    The file may specify any subset of the parameter keys; unspecified values
    fall back to :func:`calibrated_defaults`. Keys outside the parameter set
    are errors (run-level configuration belongs to the command-line layer).
    """
    return params_from_mapping(read_flat_config(path))
