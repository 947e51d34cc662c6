"""Contract design: payment schedules, value reports, and comparisons.

The designer quotes three payment rates over time: a performance rate ``z``
on the consumer's own deviation, an aggregate rate ``z_mu`` on the
population's mean deviation, and a variance rate ``gamma`` on realized
quadratic variation.  Three contract kinds are supported:

* ``new`` — the aggregate-indexed contract: ``z`` minimizes the running
  trade-off rate :func:`hbar`, ``gamma`` tracks the induced variance
  exposure, and ``z_mu`` rebalances common-noise risk between the parties;
* ``classical`` — indexation on the consumer's own meter only
  (``z_mu = 0``), with ``z`` minimizing :func:`hbar_classical`, which
  charges both parties' common-noise exposure to the performance rate;
* ``first_best`` — the full-information benchmark, quoted here through the
  shadow rates whose best responses reproduce the first-best efforts.

Two principal preferences are supported: ``cara`` (exponential utility with
risk aversion ``r_p > 0``) and ``risk_neutral`` (values in pence; also the
``r_p -> 0`` limit of the cara values).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .agent import (
    best_drift_effort,
    best_response_variance,
    best_response_vol_cost,
    best_vol_effort,
    f0,
    reservation,
)
from .model import ModelParams, ParameterError
from .numerics import integrate_samples, minimize_on_grid

__all__ = [
    "CONTRACT_KINDS",
    "PRINCIPAL_KINDS",
    "ComparisonReport",
    "EffortSchedule",
    "FirstBestReport",
    "PaymentSchedule",
    "ValueReport",
    "check_schedule_invariants",
    "compare",
    "first_best_report",
    "hbar",
    "hbar_classical",
    "m_curve",
    "optimal_schedule",
    "value_report",
]

CONTRACT_KINDS = ("new", "classical", "first_best")
PRINCIPAL_KINDS = ("cara", "risk_neutral")


def _validate_kind(kind: str) -> None:
    if kind not in CONTRACT_KINDS:
        raise ValueError(f"kind must be one of {CONTRACT_KINDS}, got {kind!r}")


def _validate_principal(principal: str, params: ModelParams) -> None:
    if principal not in PRINCIPAL_KINDS:
        raise ValueError(
            f"principal must be one of {PRINCIPAL_KINDS}, got {principal!r}"
        )
    if principal == "cara" and params.r_p <= 0.0:
        raise ParameterError(
            ["cara principal requires r_p > 0; use risk_neutral for r_p = 0"]
        )


def _validate_grid(grid: int) -> int:
    grid = int(grid)
    if grid < 2 or grid % 2 != 0:
        raise ValueError("grid must be an even integer >= 2")
    return grid


def _effective_params(principal: str, params: ModelParams) -> ModelParams:
    """Risk-neutral evaluation is the cara formula set at r_p = 0."""
    if principal == "risk_neutral" and params.r_p != 0.0:
        return dataclasses.replace(params, r_p=0.0)
    return params


@dataclasses.dataclass(frozen=True, eq=False)
class PaymentSchedule:
    """Payment rates over time for one contract offer."""

    kind: str
    principal: str
    grid: np.ndarray
    z: np.ndarray
    z_mu: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        _validate_kind(self.kind)
        if self.principal not in PRINCIPAL_KINDS:
            raise ValueError(
                f"principal must be one of {PRINCIPAL_KINDS}, "
                f"got {self.principal!r}"
            )
        n = self.grid.shape[0]
        for name in ("grid", "z", "z_mu", "gamma"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.shape[0] != n:
                raise ValueError(f"{name} must be 1-D with {n} nodes")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
        if n < 2 or not (np.diff(self.grid) > 0).all():
            raise ValueError("grid must be strictly increasing with >= 2 nodes")


@dataclasses.dataclass(frozen=True, eq=False)
class EffortSchedule:
    """Best-response efforts induced by a payment schedule."""

    grid: np.ndarray
    alpha: np.ndarray  # (nodes, d) consumption reductions
    beta: np.ndarray  # (nodes, d) variance retentions

    def __post_init__(self):
        n = self.grid.shape[0]
        if self.alpha.shape[0] != n or self.beta.shape[0] != n:
            raise ValueError("alpha and beta must have one row per grid node")
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 2:
            raise ValueError("alpha and beta must be (nodes, d) arrays")


@dataclasses.dataclass(frozen=True)
class ValueReport:
    """Principal's value of offering one contract kind."""

    v0: float
    ce: float
    xi0: float
    m_integral: float
    kind: str
    principal: str

    def to_flat(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class ComparisonReport:
    """Aggregate-indexed vs own-meter contract at the same parameters.

    ``delta_alpha`` is ``None`` when neither contract induces any drift
    effort (then a relative effort change is not applicable); the same for
    ``delta_beta`` when there is no variance at all to manage.
    """

    delta_v: float
    rel_delta_v: float
    delta_alpha: float | None
    delta_beta: float | None

    def to_flat(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True, eq=False)
class FirstBestReport:
    """Full-information benchmark values and efforts."""

    v_fb: float
    lagrange_rho: float
    ce_fb: float
    efforts: EffortSchedule
    fb_contract_constant: float

    def to_flat(self) -> dict:
        return {
            "v_fb": self.v_fb,
            "lagrange_rho": self.lagrange_rho,
            "ce_fb": self.ce_fb,
            "fb_contract_constant": self.fb_contract_constant,
        }


def hbar(t, z, params: ModelParams):
    """Running trade-off rate for the aggregate-indexed contract.

    ``hbar(t, z) = f0(theta + r_a z^2)
    + rho_bar (min(max(-z, 0), a_max) + delta (T - t))^2``:
    the first term prices the variance exposure a performance rate ``z``
    forces on the consumer, the second the gap between induced consumption
    reduction and the target ramp.
    """
    t_arr = np.asarray(t, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    remaining = params.horizon - t_arr
    exposure = f0(params.theta + params.r_a * z_arr**2, params)
    scale = np.minimum(np.maximum(-z_arr, 0.0), params.a_max)
    drift_gap = params.rho_bar * (scale + params.delta * remaining) ** 2
    total = exposure + drift_gap
    if np.ndim(t) == 0 and np.ndim(z) == 0:
        return float(total)
    return total


def hbar_classical(t, z, params: ModelParams):
    """Running trade-off rate when only the consumer's own meter is indexed.

    Adds to :func:`hbar` the common-noise exposure both parties are forced
    to carry through the performance rate:
    ``r_a sigma_circ^2 z^2 + r_p sigma_circ^2 (delta (T - t) - z)^2``.
    """
    t_arr = np.asarray(t, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    remaining = params.horizon - t_arr
    sc2 = params.sigma_circ**2
    base = hbar(t_arr, z_arr, params)
    extra = params.r_a * sc2 * z_arr**2 + params.r_p * sc2 * (
        params.delta * remaining - z_arr
    ) ** 2
    total = base + extra
    if np.ndim(t) == 0 and np.ndim(z) == 0:
        return float(total)
    return total


def _brackets(t_nodes: np.ndarray, params: ModelParams):
    """Search bracket for the performance rate at each time node.

    The minimizer always lies between the target-ramp rate
    ``delta (T - t)`` (clipped to the responsiveness cap) and zero, for
    either contract kind and either sign of ``delta``; a small margin keeps
    the true optimum strictly interior.
    """
    remaining = params.horizon - t_nodes
    ramp = params.delta * remaining
    margin = 1e-6 * (1.0 + abs(params.delta) * params.horizon)
    lo = np.maximum(np.minimum(ramp, 0.0), -params.a_max) - margin
    hi = np.maximum(ramp, 0.0) + margin
    return lo, hi


def _minimize_rate(
    t_nodes: np.ndarray, params: ModelParams, classical: bool
):
    """Minimize the running trade-off rate at every time node at once."""
    lo, hi = _brackets(t_nodes, params)
    objective = hbar_classical if classical else hbar

    def f(points: np.ndarray) -> np.ndarray:
        return objective(t_nodes[:, None], points, params)

    z_star, minima, _ = minimize_on_grid(f, lo, hi)
    return z_star, minima


def _gamma_of_z(z: np.ndarray, params: ModelParams) -> np.ndarray:
    return -np.maximum(
        params.theta + params.r_a * z**2, 1.0 / params.lambda_bar
    )


def _first_best_scale(t_nodes: np.ndarray, params: ModelParams) -> np.ndarray:
    """First-best consumption-reduction scale min(max(-delta (T-t), 0), a_max)."""
    remaining = params.horizon - t_nodes
    return np.minimum(np.maximum(-params.delta * remaining, 0.0), params.a_max)


def optimal_schedule(
    kind: str, principal: str, params: ModelParams, grid: int = 1024
):
    """Optimal payment schedule and induced efforts on a uniform grid.

    Returns ``(PaymentSchedule, EffortSchedule)`` with ``grid + 1`` nodes.
    The performance and variance rates of the ``new`` kind do not depend on
    the principal's risk aversion or on the common-noise level — only the
    aggregate rate ``z_mu`` does.
    """
    _validate_kind(kind)
    _validate_principal(principal, params)
    grid = _validate_grid(grid)
    p_eff = _effective_params(principal, params)
    horizon = params.horizon
    t = np.linspace(0.0, horizon, grid + 1)
    t[-1] = horizon
    remaining = horizon - t

    if kind == "first_best":
        z = -_first_best_scale(t, params)
        gamma = np.full_like(t, -params.theta)
        z_mu = np.zeros_like(t)
    elif kind == "classical":
        z, _ = _minimize_rate(t, p_eff, classical=True)
        gamma = _gamma_of_z(z, params)
        z_mu = np.zeros_like(t)
    else:  # new
        z, _ = _minimize_rate(t, p_eff, classical=False)
        gamma = _gamma_of_z(z, params)
        if params.sigma_circ == 0.0:
            # Degenerate common noise: the aggregate rate multiplies a null
            # process, so every choice pays the same contract.  Use the
            # classical representative so the population-indexed schedule
            # collapses onto the classical one column for column.
            z_mu = np.zeros_like(t)
        elif principal == "cara":
            ratio = params.r_p / (params.r_a + params.r_p)
            z_mu = -z + ratio * params.delta * remaining
        else:
            z_mu = -z

    payment = PaymentSchedule(
        kind=kind, principal=principal, grid=t, z=z, z_mu=z_mu, gamma=gamma
    )
    effort = EffortSchedule(
        grid=t,
        alpha=best_drift_effort(z, params),
        beta=best_vol_effort(gamma, params),
    )
    return payment, effort


def m_curve(
    kind: str, principal: str, params: ModelParams, t_nodes: np.ndarray
) -> np.ndarray:
    """Principal's running cost rate for a contract kind at given times.

    The certainty-equivalent cost the principal accrues per unit time under
    the optimal schedule of ``kind``; its time integral enters the value
    reports with a negative sign.
    """
    _validate_kind(kind)
    _validate_principal(principal, params)
    p_eff = _effective_params(principal, params)
    t_arr = np.asarray(t_nodes, dtype=float)
    remaining = params.horizon - t_arr
    sc2 = params.sigma_circ**2
    ramp_sq = params.delta**2 * remaining**2
    base = 0.5 * params.theta * sc2

    if kind == "new":
        _, minima = _minimize_rate(t_arr, p_eff, classical=False)
        return base + 0.5 * (sc2 * p_eff.r_bar - params.rho_bar) * ramp_sq + (
            0.5 * minima
        )
    if kind == "classical":
        _, minima = _minimize_rate(t_arr, p_eff, classical=True)
        return base - 0.5 * params.rho_bar * ramp_sq + 0.5 * minima

    # first_best
    scale = _first_best_scale(t_arr, params)
    damping = 0.5 * params.theta * best_response_variance(
        -params.theta, params
    ) + 0.5 * best_response_vol_cost(-params.theta, params)
    return (
        base
        + 0.5 * (sc2 * p_eff.r_bar - params.rho_bar) * ramp_sq
        + 0.5 * params.rho_bar * (scale + params.delta * remaining) ** 2
        + damping
    )


def _u_value(
    kind: str, principal: str, params: ModelParams, grid: int
) -> tuple[float, float]:
    """(cost integral, utility flow) of a contract kind."""
    horizon = params.horizon
    t = np.linspace(0.0, horizon, grid + 1)
    t[-1] = horizon
    m_vals = m_curve(kind, principal, params, t)
    m_integral = integrate_samples(m_vals, 0.0, horizon)
    u = params.delta * horizon * params.x0 - m_integral
    return m_integral, u


def value_report(
    kind: str, principal: str, params: ModelParams, grid: int = 1024
) -> ValueReport:
    """Principal's value of offering the optimal contract of ``kind``.

    ``v0`` is the utility (cara: ``-exp(r_p (xi0 - u))``; risk-neutral:
    pence, ``u - xi0``); ``ce`` is the certainty equivalent ``u - xi0`` in
    pence for both preferences.
    """
    _validate_kind(kind)
    _validate_principal(principal, params)
    grid = _validate_grid(grid)
    m_integral, u = _u_value(kind, principal, params, grid)
    xi0 = reservation(params, grid).xi0
    ce = u - xi0
    if principal == "cara":
        v0 = -math.exp(params.r_p * (xi0 - u))
    else:
        v0 = ce
    return ValueReport(
        v0=v0,
        ce=ce,
        xi0=xi0,
        m_integral=m_integral,
        kind=kind,
        principal=principal,
    )


def first_best_report(params: ModelParams, grid: int = 1024) -> FirstBestReport:
    """Full-information benchmark: what the principal could achieve if the
    efforts were contractible directly.

    The risk-sharing value is computed through the harmonic risk aversion
    ``r_bar`` and tilted back to the principal's preference; its certainty
    equivalent always dominates every implementable contract's.  With
    ``r_p = 0`` the report is in pence and the participation multiplier
    degenerates to zero.
    """
    grid = _validate_grid(grid)
    principal = "cara" if params.r_p > 0.0 else "risk_neutral"
    res = reservation(params, grid)
    _, u_fb = _u_value("first_best", principal, params, grid)
    t = np.linspace(0.0, params.horizon, grid + 1)
    t[-1] = params.horizon
    scale = _first_best_scale(t, params)
    z_fb = -scale
    gamma_fb = np.full_like(t, -params.theta)
    efforts = EffortSchedule(
        grid=t,
        alpha=best_drift_effort(z_fb, params),
        beta=best_vol_effort(gamma_fb, params),
    )
    fb_constant = -math.log(-res.r0) / params.r_a
    if principal == "cara":
        v_rbar = -math.exp(-params.r_bar * u_fb)
        power = 1.0 + params.r_p / params.r_a
        tilt = (v_rbar / res.r0) ** power
        v_fb = res.r0 * tilt
        lagrange_rho = (params.r_p / params.r_a) * tilt
        ce_fb = u_fb - res.xi0
    else:
        v_fb = u_fb - res.xi0
        lagrange_rho = 0.0
        ce_fb = v_fb
    return FirstBestReport(
        v_fb=v_fb,
        lagrange_rho=lagrange_rho,
        ce_fb=ce_fb,
        efforts=efforts,
        fb_contract_constant=fb_constant,
    )


def _drift_scale_integral(payment: PaymentSchedule, params: ModelParams) -> float:
    scale = np.minimum(np.maximum(-payment.z, 0.0), params.a_max)
    return integrate_samples(scale, 0.0, params.horizon)


def _variance_integral(payment: PaymentSchedule, params: ModelParams) -> float:
    retained = best_response_variance(payment.gamma, params)
    return integrate_samples(retained, 0.0, params.horizon)


def compare(params: ModelParams, grid: int = 1024) -> ComparisonReport:
    """Head-to-head of the aggregate-indexed and own-meter contracts.

    * ``delta_v`` — value gain per unit of principal risk aversion
      (pence-scaled for cara; plain pence difference when ``r_p = 0``);
    * ``rel_delta_v`` — gain relative to ``1 + v0`` of the own-meter
      contract;
    * ``delta_alpha`` — relative increase of time-integrated consumption
      reduction (``None`` when neither contract induces any);
    * ``delta_beta`` — relative decrease of time-integrated deviation
      variance, counting the unmanageable common part (``None`` in the
      degenerate no-variance model).
    """
    grid = _validate_grid(grid)
    principal = "cara" if params.r_p > 0.0 else "risk_neutral"
    new_report = value_report("new", principal, params, grid)
    cls_report = value_report("classical", principal, params, grid)
    gain = new_report.v0 - cls_report.v0
    if principal == "cara":
        delta_v = gain / params.r_p
    else:
        delta_v = gain
    rel_delta_v = gain / (1.0 + cls_report.v0)

    new_pay, _ = optimal_schedule("new", principal, params, grid)
    cls_pay, _ = optimal_schedule("classical", principal, params, grid)

    new_drift = _drift_scale_integral(new_pay, params)
    cls_drift = _drift_scale_integral(cls_pay, params)
    if cls_drift == 0.0:
        delta_alpha = None
    else:
        delta_alpha = (new_drift - cls_drift) / cls_drift

    new_var = _variance_integral(new_pay, params)
    cls_var = _variance_integral(cls_pay, params)
    var_denominator = cls_var + params.horizon * params.sigma_circ**2
    if var_denominator == 0.0:
        delta_beta = None
    else:
        # + 0.0 normalizes a signed zero when the integrals coincide.
        delta_beta = -(new_var - cls_var) / var_denominator + 0.0

    return ComparisonReport(
        delta_v=delta_v,
        rel_delta_v=rel_delta_v,
        delta_alpha=delta_alpha,
        delta_beta=delta_beta,
    )


def check_schedule_invariants(
    payment: PaymentSchedule, effort: EffortSchedule, params: ModelParams
) -> list[str]:
    """Internal consistency checks tying a schedule to its model.

    Returns a list of human-readable violations (empty when consistent):
    the variance rate must track the performance rate, efforts must be the
    best responses and stay inside their boxes, and the aggregate rate must
    satisfy its kind's risk-sharing relation.
    """
    problems: list[str] = []
    t = payment.grid
    remaining = params.horizon - t
    scale_tol = 1e-10 * (1.0 + abs(params.delta) * params.horizon)

    if payment.kind == "first_best":
        if not np.allclose(payment.gamma, -params.theta, rtol=0.0, atol=1e-14):
            problems.append("first_best variance rate must equal -theta")
        if np.max(np.abs(payment.z + _first_best_scale(t, params))) > scale_tol:
            problems.append(
                "first_best performance rate must mirror the target ramp"
            )
    else:
        expected_gamma = _gamma_of_z(payment.z, params)
        gamma_err = np.max(np.abs(payment.gamma - expected_gamma))
        if gamma_err > 1e-12 * (1.0 + np.max(np.abs(expected_gamma))):
            problems.append(
                "variance rate does not track -max(theta + r_a z^2, "
                f"1/lambda_bar); max error {gamma_err:.3e}"
            )

    if payment.kind == "new":
        if params.sigma_circ == 0.0:
            target = np.zeros_like(payment.z)
        elif payment.principal == "cara":
            ratio = params.r_p / (params.r_a + params.r_p)
            target = -payment.z + ratio * params.delta * remaining
        else:
            target = -payment.z
        mu_err = np.max(np.abs(payment.z_mu - target))
        if mu_err > scale_tol:
            problems.append(
                f"aggregate rate breaks its risk-sharing relation by {mu_err:.3e}"
            )
        if params.delta >= 0.0 and np.max(np.abs(payment.z)) != 0.0:
            problems.append(
                "performance rate must vanish when deviations are rewarded"
            )
    else:
        if np.max(np.abs(payment.z_mu)) != 0.0:
            problems.append(f"{payment.kind} contract must have z_mu = 0")

    alpha_expected = best_drift_effort(payment.z, params)
    if not np.array_equal(effort.alpha, alpha_expected):
        problems.append("alpha is not the best response to z")
    beta_expected = best_vol_effort(payment.gamma, params)
    if not np.array_equal(effort.beta, beta_expected):
        problems.append("beta is not the best response to gamma")

    rho = np.asarray(params.rho)
    if (effort.alpha < -0.0).any() or (
        effort.alpha > rho * params.a_max + 1e-15
    ).any():
        problems.append("alpha leaves its feasible box")
    if (effort.beta < params.b_min).any() or (effort.beta > 1.0).any():
        problems.append("beta leaves its feasible box")

    return problems
