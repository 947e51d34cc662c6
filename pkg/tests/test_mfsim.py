"""Tests for the particle Monte Carlo and its verification reports."""

import numpy as np
import pytest

from mfdr.model import ModelParams, ParameterError, calibrated_defaults
from mfdr.principal import PaymentSchedule, optimal_schedule, value_report
from mfdr.mfsim import (
    McReport,
    SimConfig,
    contract_payoffs,
    simulate,
    verify_participation,
    verify_principal_value,
)

CAL05 = calibrated_defaults(variance_share=0.5)
CAL10 = calibrated_defaults(variance_share=1.0)
CAL00 = calibrated_defaults(variance_share=0.0)


def flat_schedule(params: ModelParams, z: float, gamma: float, n: int = 64,
                  kind: str = "new", principal: str = "cara") -> PaymentSchedule:
    grid = np.linspace(0.0, params.horizon, n + 1)
    return PaymentSchedule(
        kind=kind,
        principal=principal,
        grid=grid,
        z=np.full(n + 1, float(z)),
        z_mu=np.zeros(n + 1),
        gamma=np.full(n + 1, float(gamma)),
    )


class TestSimConfig:
    def test_defaults_valid(self):
        cfg = SimConfig()
        assert cfg.n_particles >= 2 and cfg.n_common >= 1
        assert cfg.dt is None and cfg.antithetic is False

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_particles": 1},
            {"n_common": 0},
            {"dt": 0.0},
            {"dt": -1.0},
            {"seed": -1},
            {"seed": 2**64},
            {"antithetic": True, "n_common": 3},
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ParameterError):
            SimConfig(**kwargs)

    def test_collects_all_problems(self):
        with pytest.raises(ParameterError) as err:
            SimConfig(n_particles=0, n_common=0, dt=-1.0)
        message = str(err.value)
        assert "n_particles" in message
        assert "n_common" in message
        assert "dt" in message


class TestGridResolution:
    def test_default_step_is_horizon_over_512(self):
        sched = flat_schedule(CAL05, z=0.0, gamma=-1.0)
        cfg = SimConfig(n_particles=2, n_common=1, seed=1)
        ens = simulate(CAL05, sched, cfg)
        assert ens.n_steps == 512
        assert ens.dt == pytest.approx(CAL05.horizon / 512, rel=1e-15)

    def test_rejects_incompatible_step(self):
        sched = flat_schedule(CAL05, z=0.0, gamma=-1.0)
        cfg = SimConfig(n_particles=2, n_common=1, dt=CAL05.horizon / 100.5)
        with pytest.raises(ValueError, match="incompatible grids"):
            simulate(CAL05, sched, cfg)

    def test_rejects_schedule_horizon_mismatch(self):
        short = CAL05
        grid = np.linspace(0.0, short.horizon * 0.5, 9)
        sched = PaymentSchedule(
            kind="new", principal="cara", grid=grid,
            z=np.zeros(9), z_mu=np.zeros(9), gamma=np.full(9, -1.0),
        )
        cfg = SimConfig(n_particles=2, n_common=1)
        with pytest.raises(ValueError, match="incompatible grids"):
            simulate(short, sched, cfg)

    def test_left_constant_sampling_drives_drift(self):
        # Distinctive stepwise z: the drift integral must use the value at
        # the left endpoint of each step.
        params = CAL05
        n = 4
        grid = np.linspace(0.0, params.horizon, n + 1)
        z = np.array([-1.0, -2.0, -3.0, -4.0, 0.0])
        sched = PaymentSchedule(
            kind="new", principal="cara", grid=grid,
            z=z, z_mu=np.zeros(n + 1), gamma=np.full(n + 1, -1.0),
        )
        cfg = SimConfig(n_particles=2, n_common=1, dt=params.horizon / 8)
        ens = simulate(params, sched, cfg)
        # steps 0..7 sample z at t = j T/8, i.e. pairs of schedule cells
        expected = -params.rho_bar * np.sum(
            np.minimum(np.maximum(-z[[0, 0, 1, 1, 2, 2, 3, 3]], 0.0), params.a_max)
        ) * (params.horizon / 8)
        assert ens.drift_integral == pytest.approx(expected, rel=1e-14)


class TestDynamics:
    def test_driftless_terminal_variance(self):
        # Zero deviation payment rate and the flattest volatility payment
        # keeping full usage: no drift, all usages on, no common noise.
        params = CAL00
        gamma_flat = -1.0 / params.lambda_bar
        sched = flat_schedule(params, z=0.0, gamma=gamma_flat)
        cfg = SimConfig(n_particles=512, n_common=8, dt=params.horizon / 64, seed=5)
        ens = simulate(params, sched, cfg)
        assert ens.drift_integral == 0.0
        samples = ens.x_terminal.ravel()
        target = sum(s**2 for s in params.sigma) * params.horizon
        n = samples.size
        sample_var = float(np.var(samples, ddof=1))
        se_var = target * np.sqrt(2.0 / (n - 1))
        assert abs(sample_var - target) <= 4.0 * se_var
        se_mean = np.sqrt(target / n)
        assert abs(float(np.mean(samples))) <= 4.0 * se_mean

    def test_zero_idiosyncratic_noise_gives_identical_particles(self):
        params = CAL10  # all variance carried by the common noise
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cfg = SimConfig(n_particles=8, n_common=3, dt=params.horizon / 64, seed=2)
        ens = simulate(params, sched, cfg)
        for block in (ens.x_terminal, ens.xo_terminal, ens.x_integral,
                      ens.z_dx_idio, ens.zmu_dx):
            assert np.ptp(block, axis=1).max() == 0.0

    def test_common_noise_decomposition_is_exact(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cfg = SimConfig(n_particles=16, n_common=4, dt=params.horizon / 64, seed=3)
        ens = simulate(params, sched, cfg)
        w_terminal = np.sum(ens.w_circ_increments, axis=1)
        gap = ens.x_terminal - ens.xo_terminal - params.sigma_circ * w_terminal[:, None]
        assert np.max(np.abs(gap)) < 1e-12

    def test_quadratic_variation_accumulator_deterministic(self):
        params = CAL05
        sched, _ = optimal_schedule("classical", "cara", params, grid=128)
        cfg = SimConfig(n_particles=4, n_common=2, dt=params.horizon / 128, seed=4)
        ens = simulate(params, sched, cfg)
        from mfdr.agent import best_response_variance

        t_left = np.arange(ens.n_steps) * ens.dt
        idx = np.searchsorted(sched.grid, t_left, side="right") - 1
        var = best_response_variance(sched.gamma[idx], params)
        expected = float(np.sum(var + params.sigma_circ**2) * ens.dt)
        assert ens.quadratic_variation_integral == pytest.approx(expected, rel=1e-14)

    def test_keep_paths_endpoints_match(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "risk_neutral", params, grid=128)
        cfg = SimConfig(n_particles=4, n_common=2, dt=params.horizon / 32, seed=6)
        ens = simulate(params, sched, cfg, keep_paths=True)
        assert ens.x_paths is not None
        assert ens.x_paths.shape == (2, 4, 33)
        assert np.all(ens.x_paths[:, :, 0] == params.x0)
        assert np.allclose(ens.x_paths[:, :, -1], ens.x_terminal, rtol=0, atol=1e-12)

    def test_paths_not_kept_by_default(self):
        sched = flat_schedule(CAL05, z=0.0, gamma=-1.0)
        ens = simulate(CAL05, sched, SimConfig(n_particles=2, n_common=1, dt=CAL05.horizon / 16))
        assert ens.x_paths is None


class TestDeterminism:
    def test_byte_identical_across_worker_counts(self, monkeypatch):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cfg = SimConfig(n_particles=32, n_common=6, dt=params.horizon / 64, seed=42)
        blobs = []
        for threads in ("1", "4", "8"):
            monkeypatch.setenv("MFDR_THREADS", threads)
            ens = simulate(params, sched, cfg)
            pay = contract_payoffs(ens, sched, params, "cara")
            blobs.append(
                ens.x_terminal.tobytes()
                + ens.x_integral.tobytes()
                + ens.zmu_dx.tobytes()
                + pay.tobytes()
            )
        assert blobs[0] == blobs[1] == blobs[2]

    def test_invalid_thread_cap_rejected(self, monkeypatch):
        sched = flat_schedule(CAL05, z=0.0, gamma=-1.0)
        cfg = SimConfig(n_particles=2, n_common=1, dt=CAL05.horizon / 16)
        monkeypatch.setenv("MFDR_THREADS", "zero")
        with pytest.raises(ValueError, match="MFDR_THREADS"):
            simulate(CAL05, sched, cfg)
        monkeypatch.setenv("MFDR_THREADS", "0")
        with pytest.raises(ValueError, match="MFDR_THREADS"):
            simulate(CAL05, sched, cfg)

    def test_seed_reproducibility(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        mk = lambda seed: simulate(
            params, sched, SimConfig(n_particles=8, n_common=2, dt=params.horizon / 32, seed=seed)
        )
        a, b, c = mk(7), mk(7), mk(8)
        assert np.array_equal(a.x_terminal, b.x_terminal)
        assert not np.array_equal(a.x_terminal, c.x_terminal)


class TestAntithetic:
    def test_common_increments_are_negated_pairs(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cfg = SimConfig(n_particles=8, n_common=4, dt=params.horizon / 32, seed=9,
                        antithetic=True)
        ens = simulate(params, sched, cfg)
        assert np.array_equal(ens.w_circ_increments[1], -ens.w_circ_increments[0])
        assert np.array_equal(ens.w_circ_increments[3], -ens.w_circ_increments[2])
        # idiosyncratic draws of the pair members stay independent
        assert not np.allclose(ens.xo_terminal[0], ens.xo_terminal[1])

    def test_idiosyncratic_stream_invariant_to_flag(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        base = dict(n_particles=8, n_common=4, dt=params.horizon / 32, seed=9)
        on = simulate(params, sched, SimConfig(antithetic=True, **base))
        off = simulate(params, sched, SimConfig(antithetic=False, **base))
        assert np.array_equal(on.xo_terminal, off.xo_terminal)
        assert np.array_equal(on.x_terminal[0], off.x_terminal[0])
        assert not np.array_equal(on.x_terminal[1], off.x_terminal[1])

    def test_pairing_cancels_the_common_linear_term(self):
        # The W°-linear payoff term has zero pair average by construction,
        # so antithetic pairing removes its variance contribution entirely.
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cfg = SimConfig(n_particles=8, n_common=8, dt=params.horizon / 32, seed=19,
                        antithetic=True)
        ens = simulate(params, sched, cfg)
        paired = ens.z_dw_circ[0::2] + ens.z_dw_circ[1::2]
        assert np.all(paired == 0.0)
        paired_mu = ens.zmu_dw_circ[0::2] + ens.zmu_dw_circ[1::2]
        assert np.all(paired_mu == 0.0)

    def test_two_scenarios_leave_single_effective_sample(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cfg = SimConfig(n_particles=8, n_common=2, dt=params.horizon / 32, seed=1,
                        antithetic=True)
        ens = simulate(params, sched, cfg)
        pay = contract_payoffs(ens, sched, params, "cara")
        with pytest.raises(ValueError, match="at least 2 effective"):
            verify_participation(ens, pay, params)


class TestPayoffEvaluators:
    def test_requires_matching_principal(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        ens = simulate(params, sched, SimConfig(n_particles=2, n_common=1, dt=params.horizon / 32))
        with pytest.raises(ValueError, match="principal"):
            contract_payoffs(ens, sched, params, "risk_neutral")
        with pytest.raises(ValueError, match="principal_kind"):
            contract_payoffs(ens, sched, params, "quadratic")

    def test_rejects_first_best_schedule(self):
        params = CAL05
        sched, _ = optimal_schedule("first_best", "cara", params, grid=128)
        ens_sched, _ = optimal_schedule("new", "cara", params, grid=128)
        ens = simulate(params, ens_sched, SimConfig(n_particles=2, n_common=1, dt=params.horizon / 32))
        with pytest.raises(ValueError, match="first-best"):
            contract_payoffs(ens, sched, params, "cara")

    def test_rejects_unknown_indexing(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        ens = simulate(params, sched, SimConfig(n_particles=2, n_common=1, dt=params.horizon / 32))
        with pytest.raises(ValueError, match="indexing"):
            contract_payoffs(ens, sched, params, "cara", indexing="midpoint")

    def test_law_gap_is_deterministic_without_idiosyncratic_noise(self):
        params = CAL10
        sched, _ = optimal_schedule("new", "cara", params, grid=512)
        cfg = SimConfig(n_particles=64, n_common=4, dt=params.horizon / 128, seed=11)
        ens = simulate(params, sched, cfg)
        common = contract_payoffs(ens, sched, params, "cara", indexing="common_noise")
        law = contract_payoffs(ens, sched, params, "cara", indexing="law")
        gap = law - common
        assert np.ptp(gap) < 1e-12
        assert 0.0 < np.max(np.abs(gap)) < 0.25

    def test_law_gap_halves_with_the_step(self):
        params = CAL10
        sched, _ = optimal_schedule("new", "cara", params, grid=512)
        gaps = {}
        for frac in (128, 256):
            cfg = SimConfig(n_particles=64, n_common=4, dt=params.horizon / frac, seed=11)
            ens = simulate(params, sched, cfg)
            common = contract_payoffs(ens, sched, params, "cara", indexing="common_noise")
            law = contract_payoffs(ens, sched, params, "cara", indexing="law")
            gaps[frac] = float(np.max(np.abs(law - common)))
        assert 1.9 <= gaps[128] / gaps[256] <= 2.1

    def test_law_gap_bounded_with_idiosyncratic_noise(self):
        # With idiosyncratic noise the gap carries a finite-population
        # component on top of the quadrature difference; it stays small.
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=512)
        cfg = SimConfig(n_particles=512, n_common=4, dt=params.horizon / 128, seed=13)
        ens = simulate(params, sched, cfg)
        common = contract_payoffs(ens, sched, params, "cara", indexing="common_noise")
        law = contract_payoffs(ens, sched, params, "cara", indexing="law")
        assert float(np.max(np.abs(law - common))) < 1.5

    def test_risk_aversion_enters_only_through_aggregate_rate(self):
        # The payment evaluator reads (z, z_mu, gamma) alone; the extra
        # terms of a risk-averse principal all carry z + z_mu, which decays
        # to the risk-neutral value as r_p -> 0.  Relabelling the
        # risk-neutral rates as a zero-risk-aversion limit changes nothing.
        params = CAL05
        rn_sched, _ = optimal_schedule("new", "risk_neutral", params, grid=128)
        limit_sched = PaymentSchedule(
            kind="new", principal="cara", grid=rn_sched.grid,
            z=rn_sched.z, z_mu=rn_sched.z_mu, gamma=rn_sched.gamma,
        )
        cfg = SimConfig(n_particles=8, n_common=2, dt=params.horizon / 64, seed=31)
        ens = simulate(params, rn_sched, cfg)
        for indexing in ("common_noise", "law"):
            rn_pay = contract_payoffs(ens, rn_sched, params, "risk_neutral",
                                      indexing=indexing)
            lim_pay = contract_payoffs(ens, limit_sched, params, "cara",
                                       indexing=indexing)
            assert np.array_equal(rn_pay, lim_pay)

    def test_no_common_noise_reduces_to_classical_contract(self):
        # Without common noise the population-indexed payment pays exactly
        # the classical drift-and-volatility contract, path by path.
        params = CAL00
        new_sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cls_sched, _ = optimal_schedule("classical", "cara", params, grid=128)
        cfg = SimConfig(n_particles=32, n_common=2, dt=params.horizon / 64, seed=37)
        ens = simulate(params, new_sched, cfg)
        new_pay = contract_payoffs(ens, new_sched, params, "cara")
        cls_pay = contract_payoffs(ens, cls_sched, params, "cara")
        assert np.array_equal(new_pay, cls_pay)

    def test_risk_neutral_new_contract_has_no_common_exposure(self):
        # z + z_mu == 0 for the risk-neutral new contract: flipping the
        # common path must leave the payoff unchanged given X°.
        params = CAL05
        sched, _ = optimal_schedule("new", "risk_neutral", params, grid=128)
        cfg = SimConfig(n_particles=4, n_common=2, dt=params.horizon / 64, seed=21,
                        antithetic=True)
        ens = simulate(params, sched, cfg)
        pay = contract_payoffs(ens, sched, params, "risk_neutral")
        # the pair shares no idiosyncratic draws, so compare the common-noise
        # loading directly: it is zero whenever z + z_mu == 0
        loading = ens.z_dw_circ + ens.zmu_dw_circ
        assert np.max(np.abs(loading)) < 1e-12
        assert np.all(np.isfinite(pay))


class TestVerification:
    @pytest.mark.parametrize("kind", ["new", "classical"])
    @pytest.mark.parametrize("principal", ["cara", "risk_neutral"])
    def test_reports_match_closed_forms(self, kind, principal):
        params = CAL05
        sched, _ = optimal_schedule(kind, principal, params, grid=1024)
        rep = value_report(kind, principal, params, grid=1024)
        cfg = SimConfig(n_particles=256, n_common=128, dt=params.horizon / 256, seed=7)
        ens = simulate(params, sched, cfg)
        pay = contract_payoffs(ens, sched, params, principal)

        part = verify_participation(ens, pay, params)
        assert part.n_effective == 128
        assert part.std_error > 0.0
        assert abs(part.z_score) <= 4.0
        assert part.closed_form_target == pytest.approx(-0.15792983029, rel=1e-9)

        val = verify_principal_value(ens, pay, params, rep)
        assert val.n_effective == 128
        assert val.closed_form_target == rep.v0
        assert abs(val.z_score) <= 4.0
        if principal == "risk_neutral":
            assert abs(val.jackknife_bias) < 1e-12
        else:
            assert abs(val.jackknife_bias) < 1e-4

    def test_antithetic_halves_effective_samples(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=256)
        cfg = SimConfig(n_particles=64, n_common=64, dt=params.horizon / 128, seed=17,
                        antithetic=True)
        ens = simulate(params, sched, cfg)
        pay = contract_payoffs(ens, sched, params, "cara")
        part = verify_participation(ens, pay, params)
        val = verify_principal_value(ens, pay, params,
                                     value_report("new", "cara", params, grid=256))
        assert part.n_effective == 32
        assert val.n_effective == 32
        assert abs(part.z_score) <= 4.0
        assert abs(val.z_score) <= 4.0

    def test_payoff_shape_must_match(self):
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        ens = simulate(params, sched, SimConfig(n_particles=4, n_common=2, dt=params.horizon / 32))
        pay = contract_payoffs(ens, sched, params, "cara")
        with pytest.raises(ValueError, match="shape"):
            verify_participation(ens, pay[:, :2], params)
        with pytest.raises(ValueError, match="shape"):
            verify_principal_value(ens, pay[:1], params,
                                   value_report("new", "cara", params, grid=128))

    def test_exact_saturation_without_preference_slope(self):
        # kappa = 0 makes the reservation level zero; a free contract paying
        # exactly that with no effort asked yields utility -1, a point mass.
        import dataclasses

        from mfdr.agent import reservation

        params = dataclasses.replace(CAL05, kappa=0.0)
        res = reservation(params)
        assert res.xi0 == 0.0
        assert res.r0 == -1.0
        sched = flat_schedule(params, z=0.0, gamma=-1.0 / params.lambda_bar)
        cfg = SimConfig(n_particles=8, n_common=4, dt=params.horizon / 32, seed=3)
        ens = simulate(params, sched, cfg)
        assert np.all(ens.agent_cost(params) == 0.0)
        forced = np.zeros_like(ens.x_terminal)
        util = -np.exp(-params.r_a * (forced - ens.agent_cost(params)))
        assert np.all(util == -1.0)
        with pytest.raises(ValueError, match="degenerate"):
            verify_participation(ens, forced, params)

    def test_degenerate_sample_rejected(self):
        # No noise at all: every scenario produces the same value.
        params = ModelParams(
            d=1, rho=(9.3e-5,), lambda_=(2.8e-2,), eta=(1.0,), sigma=(0.0,),
            sigma_circ=0.0, a_max=609.84, b_min=0.01, r_a=5.7e-3, r_p=6e-3,
            theta=4e-3, horizon=5.5, x0=0.0, delta=-55.44, kappa=11.76,
        )
        sched, _ = optimal_schedule("new", "cara", params, grid=128)
        cfg = SimConfig(n_particles=4, n_common=4, dt=params.horizon / 32, seed=1)
        ens = simulate(params, sched, cfg)
        pay = contract_payoffs(ens, sched, params, "cara")
        with pytest.raises(ValueError, match="degenerate"):
            verify_participation(ens, pay, params)

    def test_report_flattens(self):
        rep = McReport(
            estimate=1.0, std_error=0.1, n_effective=32,
            closed_form_target=1.05, z_score=-0.5, jackknife_bias=1e-6,
        )
        flat = rep.to_flat()
        assert flat["estimate"] == 1.0
        assert flat["n_effective"] == 32.0
        assert set(flat) == {
            "estimate", "std_error", "n_effective",
            "closed_form_target", "z_score", "jackknife_bias",
        }

    def test_scenario_means_track_common_noise(self):
        # Conditionally on the common path, the population mean of X_T is
        # the deterministic drift plus the common-noise displacement.
        params = CAL05
        sched, _ = optimal_schedule("new", "cara", params, grid=256)
        cfg = SimConfig(n_particles=1024, n_common=8, dt=params.horizon / 128, seed=23)
        ens = simulate(params, sched, cfg)
        w_terminal = np.sum(ens.w_circ_increments, axis=1)
        expected = params.x0 + ens.drift_integral + params.sigma_circ * w_terminal
        observed = np.mean(ens.x_terminal, axis=1)
        idio_var = ens.quadratic_variation_integral - params.sigma_circ**2 * params.horizon
        se = np.sqrt(idio_var / ens.n_particles)
        assert np.max(np.abs(observed - expected)) <= 4.5 * se
