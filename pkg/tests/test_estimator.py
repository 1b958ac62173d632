"""Two-stage estimation, observed information, and the estimator facade."""

import warnings

import numpy as np
import pytest
from sklearn.base import clone

from oracles import fit_lognormal
from rtchangepoint import (
    ChangePointRtModel,
    ConfigError,
    DegenerateDataError,
    SimCondition,
    initialize_parameters,
    marginal_loglik,
    observed_information,
    simulate_dataset,
)
from rtchangepoint.estimator import covariance_and_se, fit_packed
from rtchangepoint.likelihood import loglik_and_score, param_slices
from rtchangepoint.quadrature import build_grid

from conftest import make_instance

SMALL = SimCondition(
    n_respondents=60, n_items=6, boundary=2, prevalence=0.3, master_seed=5
)


@pytest.fixture(scope="module")
def small_fit():
    _, y = simulate_dataset(SMALL, 0)
    model = ChangePointRtModel(boundary=2, n_quadrature=101, compute_se=True)
    return model.fit(y), y


class TestInitializer:
    def test_zero_variance_column_raises(self):
        y = np.random.default_rng(0).normal(3, 1, (20, 5))
        y[:, 2] = 3.14
        with pytest.raises(DegenerateDataError, match="column 2"):
            initialize_parameters(y, SimCondition(20, 5, 1, 0.2).config)

    def test_deterministic(self):
        _, y = simulate_dataset(SMALL, 0)
        a = initialize_parameters(y, SMALL.config)
        b = initialize_parameters(y, SMALL.config)
        np.testing.assert_array_equal(a, b)

    def test_finite_objective_and_gradient_on_generated_data(self):
        _, y = simulate_dataset(SMALL, 1)
        theta0 = initialize_parameters(y, SMALL.config)
        ll, grad = loglik_and_score(y, theta0, build_grid(21), SMALL.config)
        assert np.isfinite(ll)
        assert np.all(np.isfinite(grad))

    def test_documented_values(self):
        _, y = simulate_dataset(SMALL, 0)
        config = SMALL.config
        theta0 = initialize_parameters(y, config)
        sl = param_slices(config)
        np.testing.assert_allclose(theta0[sl["beta"]], y.mean(axis=0))
        np.testing.assert_allclose(theta0[sl["alpha"]], 0.5)
        np.testing.assert_allclose(theta0[sl["gamma"]], -0.1)
        np.testing.assert_allclose(theta0[sl["log_sigma"]], np.log(y.std(axis=0)))
        np.testing.assert_allclose(theta0[sl["psi"]], [0.0, 1.5, 0.0])


class TestFit:
    def test_deterministic_given_options(self):
        _, y = simulate_dataset(SMALL, 0)
        m1 = ChangePointRtModel(boundary=2, n_quadrature=101, compute_se=False).fit(y)
        m2 = ChangePointRtModel(boundary=2, n_quadrature=101, compute_se=False).fit(y)
        np.testing.assert_array_equal(m1.theta_, m2.theta_)
        assert m1.loglik_ == m2.loglik_

    def test_never_below_its_starting_point(self, small_fit):
        model, y = small_fit
        theta0 = initialize_parameters(y, model.config_)
        ll0 = marginal_loglik(y, theta0, model.grid_, model.config_)
        assert model.loglik_ >= ll0

    def test_converged_flag_matches_gradient_norm(self, small_fit):
        model, _ = small_fit
        assert model.converged_ == (model.gradient_norm_ < model.gradient_tol)

    def test_iteration_cap_returns_unconverged_result(self):
        _, y = simulate_dataset(SMALL, 0)
        model = ChangePointRtModel(
            boundary=2, n_quadrature=101, max_iter=3, max_iter_stage1=2,
            compute_se=False,
        ).fit(y)
        assert model.converged_ is False
        assert np.all(np.isfinite(model.theta_))

    def test_rough_parameter_recovery(self, small_fit):
        model, _ = small_fit
        true, _ = simulate_dataset(SMALL, 0)
        assert np.max(np.abs(model.beta_ - true.items.beta)) < 0.3
        assert np.max(np.abs(model.sigma_ - true.items.sigma)) < 0.2

    def test_gamma_frozen_fit_matches_independent_lognormal(self):
        """Data without shifts, fitted with every shift frozen at zero,
        reproduce the plain log-normal maximum likelihood fit."""
        cond = SimCondition(40, 4, 1, prevalence=1e-9, master_seed=9)
        true, y = simulate_dataset(cond, 0)
        assert np.all(true.tau == 4)  # nobody changes at this prevalence
        config = cond.config
        grid = build_grid(21)
        sl = param_slices(config)
        frozen = {i: 0.0 for i in range(sl["gamma"].start, sl["gamma"].stop)}
        res = fit_packed(y, config, grid, frozen=frozen, gradient_tol=1e-7)
        oracle = fit_lognormal(y, grid)
        assert res["loglik"] == pytest.approx(oracle["loglik"], abs=1e-6)


class TestObservedInformation:
    def test_symmetric_and_diagonal_positive(self, small_fit):
        model, y = small_fit
        info = model.information_
        np.testing.assert_allclose(info, info.T, atol=1e-8)
        assert np.all(np.diag(info) > 0)

    def test_diagonal_matches_second_differences(self, small_fit):
        model, y = small_fit
        info = model.information_
        h = 1e-4
        for r in [0, model.config_.n_items, len(model.theta_) - 1]:
            plus, minus = model.theta_.copy(), model.theta_.copy()
            plus[r] += h
            minus[r] -= h
            second = (
                marginal_loglik(y, plus, model.grid_, model.config_)
                - 2 * model.loglik_
                + marginal_loglik(y, minus, model.grid_, model.config_)
            ) / h**2
            assert -second == pytest.approx(info[r, r], rel=1e-3)

    def test_warns_away_from_stationary_point(self, instance):
        with pytest.warns(UserWarning, match="stationary"):
            observed_information(
                instance["y"], instance["theta"], instance["grid"], instance["config"]
            )

    def test_singular_information_yields_nan_se(self):
        info = np.diag([2.0, 0.0, 1.0])
        with pytest.warns(UserWarning, match="singular"):
            cov, se = covariance_and_se(info)
        assert np.isnan(se[1])
        assert se[0] == pytest.approx(1 / np.sqrt(2))
        assert np.all(np.isfinite(cov))

    def test_negative_curvature_yields_nan_se(self):
        info = np.diag([2.0, -1.0, 1.0])
        with pytest.warns(UserWarning, match="not positive definite"):
            _, se = covariance_and_se(info)
        assert np.isnan(se[1])
        assert not np.isnan(se[0])


class TestEstimatorFacade:
    def test_sklearn_clone_roundtrip(self):
        model = ChangePointRtModel(boundary=7, n_quadrature=33, ridge_gamma=0.5)
        cloned = clone(model)
        assert cloned.get_params() == model.get_params()

    def test_predict_proba_shape_and_support(self, small_fit):
        model, y = small_fit
        probs = model.predict_proba(y)
        assert probs.shape == (y.shape[0], model.config_.n_support)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-10)
        modes = model.predict(y)
        assert set(modes) <= set(model.config_.support.tolist())

    def test_score_is_mean_per_respondent(self, small_fit):
        model, y = small_fit
        assert model.score(y) == pytest.approx(model.loglik_ / y.shape[0], rel=1e-12)

    def test_feature_mismatch_raises(self, small_fit):
        model, y = small_fit
        with pytest.raises(ConfigError):
            model.predict_proba(y[:, :-1])

    def test_unfitted_raises(self):
        with pytest.raises(ConfigError, match="not fitted"):
            ChangePointRtModel().predict_proba(np.ones((3, 6)))

    def test_se_tables(self, small_fit):
        model, _ = small_fit
        se = model.se_items()
        c = model.config_.boundary
        assert np.all(np.isnan(se["gamma"][: c + 1]))
        assert np.all(np.isfinite(se["gamma"][c + 1 :]))
        sl = param_slices(model.config_)
        np.testing.assert_allclose(
            se["sigma"], model.sigma_ * model.standard_errors_[sl["log_sigma"]]
        )
        assert model.se_psi().shape == (3,)

    def test_invalid_options(self):
        _, y = simulate_dataset(SMALL, 0)
        with pytest.raises(ConfigError):
            ChangePointRtModel(gradient_tol=0.0).fit(y)
        with pytest.raises(ConfigError):
            ChangePointRtModel(quadrature="magic").fit(y)
        with pytest.raises(ConfigError):
            ChangePointRtModel(ridge_gamma=-1.0).fit(y)
