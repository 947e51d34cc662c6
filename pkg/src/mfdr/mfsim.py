"""Particle Monte Carlo for contracted populations with common noise.

This module provides the independent numerical check on the closed-form
results produced by :mod:`mfdr.principal`.  A finite population of
``n_particles`` consumers is simulated under ``n_common`` independent
common-noise scenarios; every particle follows the best-response dynamics
induced by a payment schedule.  Two terminal-payment evaluators are
implemented:

* ``indexing="common_noise"`` writes the payment as a functional of the
  consumer's own deviation and the common Brownian path, integrating the
  deterministic running terms with Simpson quadrature on the schedule grid;
* ``indexing="law"`` replaces the common Brownian path with the empirical
  leave-one-out population mean, accruing every running term with a
  left-endpoint Riemann sum at the simulation step.

Both evaluators target the same continuous-time payment; their pathwise gap
is a discretisation diagnostic that must shrink linearly in the step size.

Verification helpers estimate the agents' certainty equivalent (which must
match the reservation level — the contracts leave no rent) and the
principal's value (which must match the closed form), reporting Monte Carlo
standard errors, z-scores, and jackknife bias estimates.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .agent import (
    best_effort_cost,
    best_response_variance,
    hamiltonian_envelopes,
    reservation,
)
from .model import ModelParams, ParameterError, validate
from .principal import PRINCIPAL_KINDS, PaymentSchedule, ValueReport

__all__ = [
    "SimConfig",
    "ParticleEnsemble",
    "McReport",
    "simulate",
    "contract_payoffs",
    "verify_participation",
    "verify_principal_value",
]

_REL_TOL_GRID = 1e-9


def _worker_count(n_jobs: int) -> int:
    """Number of simulation workers, capped by the MFDR_THREADS variable."""
    raw = os.environ.get("MFDR_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError as exc:
            raise ValueError(
                f"MFDR_THREADS must be an integer, got {raw!r}"
            ) from exc
        if cap < 1:
            raise ValueError(f"MFDR_THREADS must be >= 1, got {cap}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one population simulation.

    Attributes:
        n_particles: consumers per common-noise scenario (>= 2).
        n_common: number of common-noise scenarios (>= 1; even when
            ``antithetic`` is set).
        dt: simulation step; ``None`` selects ``horizon / 512``.
        seed: base key of the counter-based generator.  Scenario ``m`` uses
            the key ``(seed, m)``, so results do not depend on how scenarios
            are distributed over workers.
        antithetic: pair consecutive scenarios so the odd member of each
            pair reuses the negated common-noise increments of the even
            member (idiosyncratic draws stay independent).  Estimates then
            average each pair first, halving the effective sample count.
    """

    n_particles: int = 1024
    n_common: int = 64
    dt: float | None = None
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self) -> None:
        problems = []
        if not isinstance(self.n_particles, (int, np.integer)) or self.n_particles < 2:
            problems.append(f"n_particles must be an integer >= 2, got {self.n_particles!r}")
        if not isinstance(self.n_common, (int, np.integer)) or self.n_common < 1:
            problems.append(f"n_common must be an integer >= 1, got {self.n_common!r}")
        if self.dt is not None and not (float(self.dt) > 0.0):
            problems.append(f"dt must be positive when given, got {self.dt!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            problems.append(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        if self.antithetic and self.n_common % 2 != 0:
            problems.append(
                f"antithetic pairing needs an even n_common, got {self.n_common}"
            )
        if problems:
            raise ParameterError(problems)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Simulated population: terminal states and pathwise accumulators.

    All per-particle arrays have shape ``(n_common, n_particles)``; per-
    scenario arrays have shape ``(n_common,)``.  Running integrals use the
    left endpoint of each step, matching the accrual convention of the
    law-indexed payment evaluator.
    """

    config: SimConfig
    horizon: float
    dt: float
    n_steps: int
    #: common Brownian increments, shape (n_common, n_steps)
    w_circ_increments: np.ndarray
    #: terminal deviation X_T per particle
    x_terminal: np.ndarray
    #: terminal idiosyncratic component (X_T without the common-noise part)
    xo_terminal: np.ndarray
    #: integral of X_s ds per particle (left-endpoint accrual)
    x_integral: np.ndarray
    #: integral of z dX° per particle (idiosyncratic deviation increments)
    z_dx_idio: np.ndarray
    #: integral of z_mu dX per particle (full deviation increments)
    zmu_dx: np.ndarray
    #: integral of z dW° per scenario
    z_dw_circ: np.ndarray
    #: integral of z_mu dW° per scenario
    zmu_dw_circ: np.ndarray
    #: integral of z_mu d(sum over particles of X) per scenario
    zmu_dsum: np.ndarray
    #: integral of the best-response effort cost rate (deterministic scalar)
    effort_cost_integral: float
    #: integral of the per-particle quadratic-variation rate (deterministic)
    quadratic_variation_integral: float
    #: drift integral of one particle (deterministic scalar)
    drift_integral: float
    #: full deviation paths, shape (n_common, n_particles, n_steps + 1);
    #: only stored when simulate(..., keep_paths=True)
    x_paths: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_common(self) -> int:
        return self.x_terminal.shape[0]

    @property
    def n_particles(self) -> int:
        return self.x_terminal.shape[1]

    def agent_cost(self, params: ModelParams) -> np.ndarray:
        """Accumulated agent running cost: integral of (effort cost - kappa X)."""
        return self.effort_cost_integral - params.kappa * self.x_integral

    def principal_cost(self, params: ModelParams) -> np.ndarray:
        """Accumulated principal running cost.

        Integral of ``(kappa - delta) * X_s`` (the consumers' preference
        flow net of the energy value of the deviation) plus ``theta/2``
        times the accumulated quadratic variation of the deviation.
        """
        return (
            (params.kappa - params.delta) * self.x_integral
            + 0.5 * params.theta * self.quadratic_variation_integral
        )


@dataclass(frozen=True)
class McReport:
    """Monte Carlo estimate of a closed-form quantity.

    ``estimate`` and ``std_error`` are on the scale of
    ``closed_form_target`` (certainty equivalents for participation checks,
    principal utility / value for value checks).  ``jackknife_bias`` is the
    leave-one-out bias estimate of the nonlinear transform involved; the
    estimate itself is reported uncorrected.
    """

    estimate: float
    std_error: float
    n_effective: int
    closed_form_target: float
    z_score: float
    jackknife_bias: float

    def to_flat(self) -> dict[str, float]:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n_effective": float(self.n_effective),
            "closed_form_target": self.closed_form_target,
            "z_score": self.z_score,
            "jackknife_bias": self.jackknife_bias,
        }


def _resolve_steps(params: ModelParams, cfg: SimConfig) -> tuple[float, int]:
    horizon = params.horizon
    dt = horizon / 512.0 if cfg.dt is None else float(cfg.dt)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    steps = horizon / dt
    n_steps = int(round(steps))
    if n_steps < 1 or abs(steps - n_steps) > _REL_TOL_GRID * max(1.0, steps):
        raise ValueError(
            f"incompatible grids: horizon {horizon} is not an integer "
            f"multiple of dt {dt}"
        )
    return dt, n_steps


def _check_schedule(schedule: PaymentSchedule, params: ModelParams) -> None:
    grid = schedule.grid
    if abs(grid[0]) > _REL_TOL_GRID * max(1.0, params.horizon):
        raise ValueError(f"incompatible grids: schedule must start at 0, got {grid[0]}")
    if abs(grid[-1] - params.horizon) > _REL_TOL_GRID * max(1.0, params.horizon):
        raise ValueError(
            f"incompatible grids: schedule ends at {grid[-1]} but the "
            f"horizon is {params.horizon}"
        )


def _sample_schedule(
    schedule: PaymentSchedule, dt: float, n_steps: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left-constant samples of (z, z_mu, gamma) at the step left endpoints."""
    t_left = np.arange(n_steps, dtype=np.float64) * dt
    idx = np.searchsorted(schedule.grid, t_left, side="right") - 1
    idx = np.clip(idx, 0, len(schedule.grid) - 1)
    return schedule.z[idx], schedule.z_mu[idx], schedule.gamma[idx]


def _simulate_scenario(
    m: int,
    cfg: SimConfig,
    n_steps: int,
    dt: float,
    x0: float,
    sigma_circ: float,
    drift_rate: np.ndarray,
    idio_scale: np.ndarray,
    z_steps: np.ndarray,
    zmu_steps: np.ndarray,
    keep_paths: bool,
) -> tuple[np.ndarray, ...]:
    """Simulate one common-noise scenario and reduce it to accumulators."""
    rng = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, m], dtype=np.uint64)))
    own_common = rng.standard_normal(n_steps)
    if cfg.antithetic and m % 2 == 1:
        partner = np.random.Generator(
            np.random.Philox(key=np.array([cfg.seed, m - 1], dtype=np.uint64))
        )
        common_std = -partner.standard_normal(n_steps)
    else:
        common_std = own_common
    dw_circ = common_std * np.sqrt(dt)

    idio = rng.standard_normal((cfg.n_particles, n_steps))
    dx_idio = drift_rate * dt + idio * idio_scale

    # Left-endpoint values of the idiosyncratic component and of W°.
    cum_idio = np.cumsum(dx_idio, axis=1)
    w_circ_cum = np.cumsum(dw_circ)
    xo_left = np.empty_like(dx_idio)
    xo_left[:, 0] = x0
    xo_left[:, 1:] = x0 + cum_idio[:, :-1]
    w_left = np.empty(n_steps)
    w_left[0] = 0.0
    w_left[1:] = w_circ_cum[:-1]

    xo_terminal = x0 + cum_idio[:, -1]
    x_terminal = xo_terminal + sigma_circ * w_circ_cum[-1]
    x_integral = dt * np.sum(xo_left, axis=1) + dt * sigma_circ * np.sum(w_left)
    z_dx_idio = np.sum(z_steps * dx_idio, axis=1)
    dx_full = dx_idio + sigma_circ * dw_circ
    zmu_dx = np.sum(zmu_steps * dx_full, axis=1)
    z_dw_circ = np.sum(z_steps * dw_circ)
    zmu_dw_circ = np.sum(zmu_steps * dw_circ)
    zmu_dsum = np.sum(zmu_dx)

    if keep_paths:
        x_paths = np.empty((cfg.n_particles, n_steps + 1))
        x_paths[:, 0] = x0
        x_paths[:, 1:] = x0 + cum_idio + sigma_circ * w_circ_cum
    else:
        x_paths = None

    reductions = (
        x_terminal,
        xo_terminal,
        x_integral,
        z_dx_idio,
        zmu_dx,
        np.array([z_dw_circ, zmu_dw_circ, zmu_dsum]),
    )
    for block in reductions:
        if not np.all(np.isfinite(block)):
            raise ArithmeticError(
                f"overflow in simulation of common-noise scenario {m}"
            )
    return (*reductions, dw_circ, x_paths)


def simulate(
    params: ModelParams,
    schedule: PaymentSchedule,
    cfg: SimConfig,
    keep_paths: bool = False,
) -> ParticleEnsemble:
    """Simulate a population of consumers responding to a payment schedule.

    Every particle follows the best-response deviation dynamics: drift
    ``-rho_bar * min(max(-z, 0), a_max)`` and idiosyncratic variance rate
    given by the best-response usage mix at the schedule's volatility
    payment rate, plus the common noise ``sigma_circ dW°``.  The schedule is
    sampled left-constantly at each step's left endpoint.

    The result is deterministic for a given ``cfg.seed`` regardless of how
    many workers run (scenario ``m`` always uses the counter-based key
    ``(seed, m)``); the MFDR_THREADS environment variable caps the worker
    count.
    """
    validate(params)
    _check_schedule(schedule, params)
    dt, n_steps = _resolve_steps(params, cfg)
    z_steps, zmu_steps, gamma_steps = _sample_schedule(schedule, dt, n_steps)

    scale = np.minimum(np.maximum(-z_steps, 0.0), params.a_max)
    drift_rate = -params.rho_bar * scale
    var_steps = best_response_variance(gamma_steps, params)
    idio_scale = np.sqrt(var_steps * dt)
    cost_steps = best_effort_cost(z_steps, gamma_steps, params)
    effort_cost_integral = float(np.sum(cost_steps) * dt)
    quadratic_variation_integral = float(
        np.sum(var_steps + params.sigma_circ**2) * dt
    )
    drift_integral = float(np.sum(drift_rate) * dt)

    M, N = cfg.n_common, cfg.n_particles
    x_terminal = np.empty((M, N))
    xo_terminal = np.empty((M, N))
    x_integral = np.empty((M, N))
    z_dx_idio = np.empty((M, N))
    zmu_dx = np.empty((M, N))
    z_dw_circ = np.empty(M)
    zmu_dw_circ = np.empty(M)
    zmu_dsum = np.empty(M)
    w_circ_increments = np.empty((M, n_steps))
    x_paths = np.empty((M, N, n_steps + 1)) if keep_paths else None

    def run(m: int) -> None:
        out = _simulate_scenario(
            m,
            cfg,
            n_steps,
            dt,
            params.x0,
            params.sigma_circ,
            drift_rate,
            idio_scale,
            z_steps,
            zmu_steps,
            keep_paths,
        )
        x_terminal[m] = out[0]
        xo_terminal[m] = out[1]
        x_integral[m] = out[2]
        z_dx_idio[m] = out[3]
        zmu_dx[m] = out[4]
        z_dw_circ[m], zmu_dw_circ[m], zmu_dsum[m] = out[5]
        w_circ_increments[m] = out[6]
        if keep_paths:
            x_paths[m] = out[7]

    workers = _worker_count(M)
    if workers == 1:
        for m in range(M):
            run(m)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(run, m) for m in range(M)]:
                future.result()

    return ParticleEnsemble(
        config=cfg,
        horizon=params.horizon,
        dt=dt,
        n_steps=n_steps,
        w_circ_increments=w_circ_increments,
        x_terminal=x_terminal,
        xo_terminal=xo_terminal,
        x_integral=x_integral,
        z_dx_idio=z_dx_idio,
        zmu_dx=zmu_dx,
        z_dw_circ=z_dw_circ,
        zmu_dw_circ=zmu_dw_circ,
        zmu_dsum=zmu_dsum,
        effort_cost_integral=effort_cost_integral,
        quadratic_variation_integral=quadratic_variation_integral,
        drift_integral=drift_integral,
        x_paths=x_paths,
    )


def _ensure_compatible(ensemble: ParticleEnsemble, schedule: PaymentSchedule,
                       params: ModelParams) -> None:
    _check_schedule(schedule, params)
    if abs(ensemble.horizon - params.horizon) > _REL_TOL_GRID * max(1.0, params.horizon):
        raise ValueError(
            f"incompatible grids: ensemble horizon {ensemble.horizon} does "
            f"not match params horizon {params.horizon}"
        )


def _simpson_running_terms(
    schedule: PaymentSchedule, params: ModelParams
) -> float:
    """Simpson integral of the deterministic running terms of the payment.

    The integrand collects, per unit time, minus the drift and volatility
    Hamiltonian envelopes (halved), the volatility-payment correction
    ``(gamma + r_a z^2) * Sigma*(gamma) / 2``, and the common-noise risk
    loading ``r_a sigma_circ^2 (z + z_mu)^2 / 2``.
    """
    grid = schedule.grid
    n = len(grid) - 1
    if n % 2 != 0:
        raise ValueError(
            f"incompatible grids: Simpson accrual needs an even number of "
            f"schedule intervals, got {n}"
        )
    z, zmu, gamma = schedule.z, schedule.z_mu, schedule.gamma
    env = hamiltonian_envelopes(z, gamma, np.zeros_like(z), params)
    var = best_response_variance(gamma, params)
    f = (
        -0.5 * env.h_d
        - 0.5 * env.h_v
        + 0.5 * (gamma + params.r_a * z**2) * var
        + 0.5 * params.r_a * params.sigma_circ**2 * (z + zmu) ** 2
    )
    h = (grid[-1] - grid[0]) / n
    weights = np.ones(n + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return float(h / 3.0 * np.sum(weights * f))


def contract_payoffs(
    ensemble: ParticleEnsemble,
    schedule: PaymentSchedule,
    params: ModelParams,
    principal_kind: str,
    indexing: Literal["common_noise", "law"] = "common_noise",
) -> np.ndarray:
    """Terminal payment received by every particle, shape (n_common, n_particles).

    With ``indexing="common_noise"`` the payment is evaluated in its
    common-noise-indexed form: reservation level, deterministic running
    terms (Simpson quadrature on the schedule grid), the deviation tracking
    terms ``-kappa ∫X ds + ∫z dX°``, and the common-noise exposure
    ``sigma_circ ∫(z + z_mu) dW°``.

    With ``indexing="law"`` the common Brownian path is replaced by the
    leave-one-out empirical mean of the population (each particle is paid
    against the other ``n_particles - 1``), and every running term accrues
    with a left-endpoint Riemann sum at the simulation step, as a real
    contract written on observables would.  The two evaluations agree up to
    quadrature and propagation-of-chaos errors.
    """
    if principal_kind not in PRINCIPAL_KINDS:
        raise ValueError(
            f"principal_kind must be one of {PRINCIPAL_KINDS}, got {principal_kind!r}"
        )
    if schedule.kind == "first_best":
        raise ValueError(
            "contract_payoffs evaluates implementable payment schedules; "
            "the first-best benchmark is not one of them"
        )
    if schedule.principal != principal_kind:
        raise ValueError(
            f"schedule was built for a {schedule.principal!r} principal, "
            f"got principal_kind={principal_kind!r}"
        )
    if indexing not in ("common_noise", "law"):
        raise ValueError(
            f"indexing must be 'common_noise' or 'law', got {indexing!r}"
        )
    _ensure_compatible(ensemble, schedule, params)

    res = reservation(params, grid_size=max(2, len(schedule.grid) - 1))
    xi0 = res.xi0
    dt, n_steps = ensemble.dt, ensemble.n_steps
    z, zmu, gamma = _sample_schedule(schedule, dt, n_steps)
    sc = params.sigma_circ

    if indexing == "common_noise":
        det = _simpson_running_terms(schedule, params)
        payoff = (
            xi0
            + det
            - params.kappa * ensemble.x_integral
            + ensemble.z_dx_idio
            + sc * (ensemble.z_dw_circ + ensemble.zmu_dw_circ)[:, None]
        )
        return payoff

    n = ensemble.n_particles
    if n < 2:
        raise ValueError("law indexing needs n_particles >= 2")
    env = hamiltonian_envelopes(z, gamma, np.zeros_like(z), params)
    var = best_response_variance(gamma, params)
    scale = np.minimum(np.maximum(-z, 0.0), params.a_max)
    det_rate = (
        -0.5 * env.h_d
        - 0.5 * env.h_v
        - 0.5 * gamma * sc**2
        + zmu * params.rho_bar * scale
        + 0.5 * (gamma + params.r_a * z**2) * (var + sc**2)
        + 0.5 * params.r_a * sc**2 * zmu * (zmu + 2.0 * z)
    )
    det = float(np.sum(det_rate) * dt)
    loo_mean_increment = (ensemble.zmu_dsum[:, None] - ensemble.zmu_dx) / (n - 1)
    payoff = (
        xi0
        + det
        - params.kappa * ensemble.x_integral
        + ensemble.z_dx_idio
        + sc * ensemble.z_dw_circ[:, None]
        + loo_mean_increment
    )
    return payoff


def _pair_average(samples: np.ndarray, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return samples
    if len(samples) % 2 != 0:
        raise ValueError(
            f"antithetic pairing needs an even sample count, got {len(samples)}"
        )
    return 0.5 * (samples[0::2] + samples[1::2])


def _mc_moments(samples: np.ndarray) -> tuple[float, float]:
    n = len(samples)
    if n < 2:
        raise ValueError(
            f"need at least 2 effective Monte Carlo samples, got {n}"
        )
    mean = float(np.sum(samples) / n)
    var = float(np.sum((samples - mean) ** 2) / (n - 1))
    se = float(np.sqrt(var / n))
    if se == 0.0:
        raise ValueError(
            "degenerate Monte Carlo sample: standard error is exactly zero"
        )
    return mean, se


def verify_participation(
    ensemble: ParticleEnsemble,
    payoffs: np.ndarray,
    params: ModelParams,
) -> McReport:
    """Check that the contract leaves the agents exactly their reservation.

    The per-particle utility ``-exp(-r_a (payoff - running cost))`` is
    averaged within each common-noise scenario, scenario means (pair-
    averaged if antithetic) form the Monte Carlo sample, and the resulting
    estimate is mapped to a certainty equivalent.  The report compares it
    to the reservation certainty equivalent with a delta-method standard
    error and a leave-one-scenario-out jackknife bias for the log transform.
    """
    if payoffs.shape != ensemble.x_terminal.shape:
        raise ValueError(
            f"payoffs shape {payoffs.shape} does not match the ensemble "
            f"shape {ensemble.x_terminal.shape}"
        )
    util = -np.exp(-params.r_a * (payoffs - ensemble.agent_cost(params)))
    if not np.all(np.isfinite(util)):
        raise ArithmeticError("overflow while evaluating agent utilities")
    scenario_means = np.sum(util, axis=1) / ensemble.n_particles
    samples = _pair_average(scenario_means, ensemble.config.antithetic)
    mean_util, se_util = _mc_moments(samples)
    if mean_util >= 0.0:
        raise ArithmeticError(
            "agent utility estimate must be negative (exponential utility)"
        )
    ce = -np.log(-mean_util) / params.r_a
    se_ce = se_util / (params.r_a * (-mean_util))

    n = len(samples)
    total = np.sum(samples)
    loo_means = (total - samples) / (n - 1)
    if np.any(loo_means >= 0.0):
        raise ArithmeticError(
            "agent utility estimate must be negative (exponential utility)"
        )
    loo_ce = -np.log(-loo_means) / params.r_a
    jackknife_bias = float((n - 1) * (np.sum(loo_ce) / n - ce))

    res = reservation(params)
    z_score = (ce - res.xi0) / se_ce
    return McReport(
        estimate=float(ce),
        std_error=float(se_ce),
        n_effective=n,
        closed_form_target=float(res.xi0),
        z_score=float(z_score),
        jackknife_bias=jackknife_bias,
    )


def verify_principal_value(
    ensemble: ParticleEnsemble,
    payoffs: np.ndarray,
    params: ModelParams,
    value_report: ValueReport,
) -> McReport:
    """Check the principal's simulated value against its closed form.

    Each common-noise scenario produces one realisation of the principal's
    aggregate cost: payment plus running principal cost, averaged over the
    population.  A risk-averse principal maps it through
    ``-exp(r_p * cost)``; a risk-neutral principal through ``-cost``.  The
    scenario values (pair-averaged if antithetic) are compared against
    ``value_report.v0``.  ``jackknife_bias`` is the mean leave-one-
    particle-out bias of the within-scenario nonlinearity; it vanishes
    identically in the risk-neutral case.
    """
    if payoffs.shape != ensemble.x_terminal.shape:
        raise ValueError(
            f"payoffs shape {payoffs.shape} does not match the ensemble "
            f"shape {ensemble.x_terminal.shape}"
        )
    n = ensemble.n_particles
    if n < 2:
        raise ValueError(
            f"jackknife over particles needs n_particles >= 2, got {n}"
        )
    cost = payoffs + ensemble.principal_cost(params)
    scenario_cost = np.sum(cost, axis=1) / n
    loo_cost = (n * scenario_cost[:, None] - cost) / (n - 1)
    if value_report.principal == "cara":
        values = -np.exp(params.r_p * scenario_cost)
        loo_values = -np.exp(params.r_p * loo_cost)
    else:
        values = -scenario_cost
        loo_values = -loo_cost
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(loo_values))):
        raise ArithmeticError("overflow while evaluating principal values")
    bias_per_scenario = (n - 1) * (np.sum(loo_values, axis=1) / n - values)
    jackknife_bias = float(np.sum(bias_per_scenario) / ensemble.n_common)

    samples = _pair_average(values, ensemble.config.antithetic)
    estimate, se = _mc_moments(samples)
    z_score = (estimate - value_report.v0) / se
    return McReport(
        estimate=estimate,
        std_error=se,
        n_effective=len(samples),
        closed_form_target=float(value_report.v0),
        z_score=float(z_score),
        jackknife_bias=jackknife_bias,
    )
