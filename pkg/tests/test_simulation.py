"""Data generation, recovery metrics, reproducibility, and the grids."""

import numpy as np
import pytest

from rtchangepoint import (
    ConfigError,
    EstimationError,
    RecoveryReport,
    SimCondition,
    draw_true_params,
    primary_grid,
    run_condition,
    run_grid,
    secondary_grid,
    simulate_dataset,
    simulate_respondent,
)
from rtchangepoint import simulation as sim_mod


class ForcedSpeed:
    """Generator wrapper pinning the latent speed draw at a fixed value."""

    def __init__(self, rng, xi=0.0):
        self._rng = rng
        self._xi = xi

    def standard_normal(self, *a, **k):
        return self._xi

    def __getattr__(self, name):
        return getattr(self._rng, name)


COND = SimCondition(
    n_respondents=256, n_items=20, boundary=15, prevalence=0.15, master_seed=7
)


class TestStructuralDerivation:
    def test_no_change_odds_from_prevalence(self):
        cond = SimCondition(10, 20, 5, prevalence=0.15)
        assert cond.psi2 == pytest.approx(1.73460, abs=1e-5)

    def test_even_prevalence_is_zero_odds(self):
        assert SimCondition(10, 20, 5, prevalence=0.5).psi2 == 0.0

    def test_prevalence_bounds(self):
        with pytest.raises(ConfigError):
            SimCondition(10, 20, 5, prevalence=1.5)


class TestDraws:
    def test_parameter_ranges(self):
        cond = SimCondition(10, 20, 5, 0.25, master_seed=1)
        betas, alphas, gammas, sigmas = [], [], [], []
        for rep in range(500):
            true = draw_true_params(cond, cond.stream(rep, 0))
            betas.append(true.items.beta)
            alphas.append(true.items.alpha)
            gammas.append(true.items.gamma[6:])
            sigmas.append(true.items.sigma)
        betas, alphas = np.concatenate(betas), np.concatenate(alphas)
        gammas, sigmas = np.concatenate(gammas), np.concatenate(sigmas)
        assert betas.size >= 10_000
        assert betas.min() >= 3.0 and betas.max() <= 4.0
        assert alphas.min() >= 0.5 and alphas.max() <= 1.5
        assert gammas.min() >= 0.3 and gammas.max() <= 0.8
        assert sigmas.min() >= 0.2 and sigmas.max() <= 0.4

    def test_constrained_gammas_stay_zero(self):
        cond = SimCondition(10, 20, 5, 0.25)
        true = draw_true_params(cond, cond.stream(0, 0))
        np.testing.assert_array_equal(true.items.gamma[:6], 0.0)

    def test_negative_shift_range(self):
        cond = SimCondition(10, 12, 4, 0.3, gamma_low=-0.8, gamma_high=-0.3)
        true = draw_true_params(cond, cond.stream(0, 0))
        free = true.items.gamma[5:]
        assert np.all(free < 0)


class TestRespondentGeneration:
    def test_no_change_rate_at_pinned_speed(self):
        """At xi = 0 the no-change rate matches logistic(psi2) = 0.85."""
        cond = SimCondition(10, 20, 5, prevalence=0.15, master_seed=3)
        true = draw_true_params(cond, cond.stream(0, 0))
        rng = ForcedSpeed(np.random.default_rng(11), xi=0.0)
        taus = np.array(
            [simulate_respondent(true, cond, rng)[2] for _ in range(10_000)]
        )
        assert np.mean(taus == 20) == pytest.approx(0.85, abs=0.01)

    def test_tau_frequencies_match_pmf(self):
        from rtchangepoint import changepoint_pmf

        cond = SimCondition(10, 12, 3, prevalence=0.3, master_seed=5)
        true = draw_true_params(cond, cond.stream(0, 0))
        xi = 0.8
        rng = ForcedSpeed(np.random.default_rng(13), xi=xi)
        n = 10_000
        taus = np.array([simulate_respondent(true, cond, rng)[2] for _ in range(n)])
        for tau in cond.config.support:
            p = changepoint_pmf(int(tau), xi, true.psi, cond.config)
            se = np.sqrt(p * (1 - p) / n)
            assert abs(np.mean(taus == tau) - p) <= 3 * se + 1e-12

    def test_visible_level_shift_when_noiseless(self):
        cond = SimCondition(10, 12, 3, 0.9, master_seed=2)
        true = draw_true_params(cond, cond.stream(0, 0))
        items = true.items
        quiet = sim_mod.TrueParams(
            items=type(items)(
                beta=items.beta, alpha=items.alpha, gamma=np.where(items.gamma, 0.9, 0.0),
                sigma=np.full(12, 1e-3), config=cond.config,
            ),
            psi=true.psi,
        )
        rng = ForcedSpeed(np.random.default_rng(0), xi=0.0)
        while True:
            y, _, tau = simulate_respondent(quiet, cond, rng)
            if tau < 12:
                break
        jumps = y - quiet.items.beta
        assert np.all(np.abs(jumps[: tau]) < 0.01)
        assert np.all(np.abs(jumps[tau:] - 0.9) < 0.01)

    def test_item_means_match_model(self):
        """With no changers, averages concentrate at beta within CLT bands."""
        cond = SimCondition(10, 8, 3, prevalence=1e-9, master_seed=4)
        true = draw_true_params(cond, cond.stream(0, 0))
        rng = np.random.default_rng(17)
        n = 10_000
        ys = np.empty((n, 8))
        for i in range(n):
            ys[i], _, tau = simulate_respondent(true, cond, rng)
            assert tau == 8
        sd = np.sqrt(true.items.sigma**2 + true.items.alpha**2)
        np.testing.assert_array_less(
            np.abs(ys.mean(axis=0) - true.items.beta), 3 * sd / np.sqrt(n) * 1.5
        )


class TestReproducibility:
    def test_identical_streams(self):
        t1, y1 = simulate_dataset(COND, replication=3)
        t2, y2 = simulate_dataset(COND, replication=3)
        np.testing.assert_array_equal(y1, y2)
        np.testing.assert_array_equal(t1.tau, t2.tau)
        np.testing.assert_array_equal(t1.items.beta, t2.items.beta)

    def test_replications_differ(self):
        _, y1 = simulate_dataset(COND, replication=0)
        _, y2 = simulate_dataset(COND, replication=1)
        assert not np.array_equal(y1, y2)

    def test_seeds_differ(self):
        other = SimCondition(256, 20, 15, 0.15, master_seed=8)
        _, y1 = simulate_dataset(COND, 0)
        _, y2 = simulate_dataset(other, 0)
        assert not np.array_equal(y1, y2)

    def test_respondent_streams_are_independent(self):
        cond = SimCondition(4, 20, 5, 0.3, master_seed=1)
        _, y = simulate_dataset(cond, 0)
        assert len({tuple(np.round(row, 12)) for row in y}) == 4


class TestRecoveryReport:
    def test_rmse_decomposition(self):
        rng = np.random.default_rng(0)
        errors = rng.normal(0.05, 0.2, size=(40, 6))
        report = RecoveryReport(
            condition=SimCondition(10, 6, 2, 0.3),
            errors_beta=errors, errors_alpha=errors, errors_gamma=errors,
            errors_sigma=errors, errors_psi=errors[:, :3],
            mae_mode_per_rep=np.abs(errors[:, 0]),
            mae_mean_per_rep=np.abs(errors[:, 1]),
        )
        rmse_sq = report.rmse_beta**2
        decomposition = report.bias_beta**2 + errors.var(axis=0)
        np.testing.assert_allclose(rmse_sq, decomposition, atol=1e-10)
        assert np.all(report.rmse_beta >= np.abs(report.bias_beta))

    def test_perfect_recovery_stub(self):
        cond = SimCondition(30, 6, 2, 0.3, n_replications=3, master_seed=1)
        report = run_condition(cond, stub_perfect_recovery=True)
        assert report.mae_mode == 0.0
        assert report.mae_mean == 0.0
        np.testing.assert_array_equal(report.bias_psi, 0.0)
        np.testing.assert_array_equal(report.bias_beta, 0.0)
        assert report.n_completed == 3

    def test_gamma_errors_nan_outside_window(self):
        cond = SimCondition(30, 6, 2, 0.3, n_replications=2, master_seed=1)
        report = run_condition(cond, stub_perfect_recovery=True)
        assert np.all(np.isnan(report.bias_gamma[:3]))
        assert np.all(~np.isnan(report.bias_gamma[3:]))

    def test_failure_policy(self, monkeypatch):
        cond = SimCondition(30, 6, 2, 0.3, n_replications=5, master_seed=1)

        original = sim_mod._replicate

        def flaky(condition, replication, fit_params, stub):
            if replication == 2:
                raise EstimationError("synthetic failure")
            return original(condition, replication, fit_params, stub)

        monkeypatch.setattr(sim_mod, "_replicate", flaky)
        report = run_condition(cond, stub_perfect_recovery=True, max_failure_rate=0.5)
        assert report.n_failed == 1
        assert report.n_completed == 4
        assert report.failures[0][0] == 2

        def always(condition, replication, fit_params, stub):
            raise EstimationError("synthetic failure")

        monkeypatch.setattr(sim_mod, "_replicate", always)
        with pytest.raises(EstimationError):
            run_condition(cond, stub_perfect_recovery=True)


class TestGrids:
    def test_primary_grid_layout(self):
        grid = primary_grid(n_replications=5, master_seed=2)
        assert len(grid) == 9
        assert {(c.boundary, c.prevalence) for c in grid} == {
            (c, pi) for c in (5, 10, 15) for pi in (0.15, 0.25, 0.40)
        }
        assert all(c.n_respondents == 256 and c.n_items == 20 for c in grid)

    def test_secondary_grid_layout(self):
        grid = secondary_grid(n_replications=5)
        assert len(grid) == 9
        assert {(c.n_items, c.boundary) for c in grid} == {(20, 12), (30, 18), (40, 24)}
        assert {c.n_respondents for c in grid} == {200, 600, 1800}
        assert all(c.prevalence == 0.15 for c in grid)

    def test_custom_list_single_condition(self):
        cond = SimCondition(20, 6, 2, 0.3, n_replications=2, master_seed=0)
        reports = run_grid([cond], stub_perfect_recovery=True)
        assert len(reports) == 1
        assert reports[0].condition is cond

    def test_unknown_grid_name(self):
        with pytest.raises(ConfigError):
            run_grid("tertiary")


class TestSignAgnosticism:
    def test_negative_shifts_run_unchanged(self):
        """Acceleration data go through generation, fitting, and scoring."""
        cond = SimCondition(
            60, 6, 2, 0.4, n_replications=2, master_seed=3,
            gamma_low=-0.8, gamma_high=-0.3,
        )
        report = run_condition(cond, n_quadrature=101)
        assert report.n_completed == 2
        assert np.isfinite(report.mae_mode)
        assert np.all(np.isfinite(report.bias_beta))
