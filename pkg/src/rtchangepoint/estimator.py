"""Maximum likelihood estimation: two-stage optimization, observed
information, and the scikit-learn style estimator facade.

Stage 1 maximizes a weakly ridge-penalized log-likelihood (penalties on the
post-change shifts and on the location weight psi1) from a deterministic
initializer; stage 2 restarts the unpenalized likelihood from the stage-1
solution. All reported results come from the unpenalized refit.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator

from .exceptions import ConfigError, DegenerateDataError, EstimationError, InitializationError
from .likelihood import (
    loglik_and_score,
    marginal_loglik,
    n_free_params,
    pack_params,
    param_slices,
    per_respondent_loglik,
    posterior_weights,
    score,
    unpack_params,
)
from .model import ModelConfig, validate_rt_matrix
from .posterior import PosteriorTable
from .quadrature import build_dense_grid, build_grid

_INIT_ALPHA = 0.5
_INIT_GAMMA = -0.1
_INIT_PSI = (0.0, 1.5, 0.0)


def initialize_parameters(y: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Deterministic starting vector built from column moments.

    beta starts at the column means, log sigma at the log column standard
    deviations, alpha/gamma/psi at fixed mild values. A zero-variance column
    leaves the scale parameter undefined and raises.
    """
    y = validate_rt_matrix(y, config)
    col_std = y.std(axis=0)
    if np.any(col_std <= 0.0):
        j = int(np.flatnonzero(col_std <= 0.0)[0])
        raise DegenerateDataError(f"item column {j} has zero variance")
    sl = param_slices(config)
    theta = np.empty(n_free_params(config))
    theta[sl["beta"]] = y.mean(axis=0)
    theta[sl["alpha"]] = _INIT_ALPHA
    theta[sl["gamma"]] = _INIT_GAMMA
    theta[sl["log_sigma"]] = np.log(col_std)
    theta[sl["psi"]] = _INIT_PSI
    return theta


def _run_lbfgs(
    y, theta0, grid, config, free_mask, ridge_gamma, ridge_psi1, max_iter, gtol,
    ftol=1e-11,
):
    """One L-BFGS pass on the (possibly penalized) negative log-likelihood.

    Frozen coordinates (free_mask False) keep their theta0 values. Returns
    (theta, loglik_penalized, n_iter). Non-finite evaluations are mapped to
    +inf so the line search backs off instead of aborting.

    The relative-progress stop (ftol) matters on weakly identified
    stretches: the likelihood can be flat in the location weight over a
    wide range, and terminating on stagnation keeps such coordinates near
    their regularized warm start instead of drifting along the plateau.
    """
    sl = param_slices(config)
    gamma_sl, psi_sl = sl["gamma"], sl["psi"]
    psi1_idx = psi_sl.start
    theta_work = theta0.copy()

    def negative_objective(x):
        theta_work[free_mask] = x
        try:
            ll, g = loglik_and_score(y, theta_work, grid, config)
        except EstimationError:
            return np.inf, np.zeros(x.shape)
        if ridge_gamma > 0.0:
            gam = theta_work[gamma_sl]
            ll -= ridge_gamma * float(gam @ gam)
            g[gamma_sl] -= 2.0 * ridge_gamma * gam
        if ridge_psi1 > 0.0:
            ll -= ridge_psi1 * theta_work[psi1_idx] ** 2
            g[psi1_idx] -= 2.0 * ridge_psi1 * theta_work[psi1_idx]
        if not np.isfinite(ll):
            return np.inf, np.zeros(x.shape)
        return -ll, -g[free_mask]

    f0, _ = negative_objective(theta0[free_mask])
    if not np.isfinite(f0):
        raise InitializationError("objective is not finite at the starting vector")
    res = minimize(
        negative_objective,
        theta0[free_mask],
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "maxcor": 10, "gtol": gtol, "ftol": ftol},
    )
    theta = theta0.copy()
    theta[free_mask] = res.x
    return theta, -float(res.fun), int(res.nit)


def fit_packed(
    y,
    config: ModelConfig,
    grid,
    *,
    theta0=None,
    ridge_gamma=0.01,
    ridge_psi1=0.01,
    max_iter=2000,
    max_iter_stage1=100,
    gradient_tol=1e-4,
    n_restarts=0,
    random_state=None,
    frozen=None,
):
    """Two-stage maximum likelihood fit on the packed parameter vector.

    Parameters
    ----------
    frozen : dict[int, float], optional
        Packed coordinates held fixed at the given values during both
        stages (used for likelihood-ratio refits and model reductions).

    Returns
    -------
    dict with keys theta, loglik, converged, n_iter, gradient_norm.

    Notes
    -----
    The likelihood has mirrored local modes in which the majority class is
    relabeled as "changed" with oppositely signed shifts; which mode a run
    reaches is decided early by the sign of the starting shift block. The
    default start set therefore contains the deterministic initializer and
    its gamma-mirrored twin; the best unpenalized likelihood wins, ties
    going to the earlier start.
    """
    y = validate_rt_matrix(y, config)
    if theta0 is None:
        theta0 = initialize_parameters(y, config)
    theta0 = np.asarray(theta0, dtype=float).copy()
    free_mask = np.ones(n_free_params(config), dtype=bool)
    if frozen:
        for idx, value in frozen.items():
            theta0[idx] = value
            free_mask[idx] = False

    starts = [theta0]
    gamma_sl = param_slices(config)["gamma"]
    if np.any(theta0[gamma_sl][free_mask[gamma_sl]] != 0.0):
        mirrored = theta0.copy()
        mirrored[gamma_sl] = -mirrored[gamma_sl]
        mirrored[~free_mask] = theta0[~free_mask]
        starts.append(mirrored)
    if n_restarts > 0:
        rng = np.random.default_rng(random_state)
        for _ in range(n_restarts):
            jittered = theta0 + 0.1 * rng.standard_normal(theta0.shape)
            jittered[~free_mask] = theta0[~free_mask]
            starts.append(jittered)

    # Stage 1 only commits a run to a likelihood basin (the basins are
    # decided within the first few dozen iterations), so it runs under a
    # small iteration budget and a loose tolerance; the winning basin (by
    # unpenalized likelihood at the stage-1 point, ties to the earliest
    # start) gets the precise unpenalized stage-2 refit.
    stage1_tol = max(gradient_tol, 1e-3)
    best_start = None
    total_iter = 0
    for start in starts:
        stage1, _, it1 = _run_lbfgs(
            y, start, grid, config, free_mask, ridge_gamma, ridge_psi1,
            min(max_iter, max_iter_stage1), stage1_tol, ftol=1e-9,
        )
        stage1_ll = marginal_loglik(y, stage1, grid, config)
        total_iter += it1
        if best_start is None or stage1_ll > best_start[1]:
            best_start = (stage1, stage1_ll)

    stage1, stage1_ll = best_start
    theta, ll, it2 = _run_lbfgs(
        y, stage1, grid, config, free_mask, 0.0, 0.0, max_iter, gradient_tol
    )
    total_iter += it2
    # L-BFGS line searches are monotone, so this only guards pathologies.
    if ll < stage1_ll:
        theta, ll = stage1, stage1_ll
    grad = score(y, theta, grid, config)
    grad_norm = float(np.max(np.abs(grad[free_mask]))) if free_mask.any() else 0.0
    return {
        "theta": theta,
        "loglik": ll,
        "converged": grad_norm < gradient_tol,
        "n_iter": total_iter,
        "gradient_norm": grad_norm,
    }


def observed_information(y, theta_hat, grid, config: ModelConfig, *, gradient_tol=1e-6):
    """Negative Hessian of the log-likelihood at theta_hat.

    Computed by central finite differences of the analytic score with step
    max(1e-5, 1e-5 |theta_r|) per coordinate, then symmetrized. Warns when
    theta_hat does not look stationary.
    """
    y = validate_rt_matrix(y, config)
    theta_hat = np.asarray(theta_hat, dtype=float)
    g = score(y, theta_hat, grid, config)
    if np.max(np.abs(g)) >= 10.0 * gradient_tol:
        warnings.warn(
            "observed_information evaluated away from a stationary point "
            f"(gradient sup-norm {np.max(np.abs(g)):.3g})",
            stacklevel=2,
        )
    d = theta_hat.shape[0]
    hess = np.empty((d, d))
    for r in range(d):
        h = max(1e-5, 1e-5 * abs(theta_hat[r]))
        plus = theta_hat.copy()
        plus[r] += h
        minus = theta_hat.copy()
        minus[r] -= h
        hess[r] = (score(y, plus, grid, config) - score(y, minus, grid, config)) / (2.0 * h)
    if not np.all(np.isfinite(hess)):
        raise EstimationError("non-finite entries in the observed information")
    info = -0.5 * (hess + hess.T)
    return info


def covariance_and_se(info: np.ndarray):
    """Invert the observed information, flagging unidentified coordinates.

    When the information matrix is singular (or has nonpositive curvature
    directions), affected coordinates get NaN standard errors instead of a
    silently pseudo-inverted value; the covariance is then pinv-based.
    """
    d = info.shape[0]
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = None
    if cov is not None and np.all(np.isfinite(cov)):
        diag = np.diag(cov).copy()
        se = np.sqrt(np.where(diag > 0, diag, np.nan))
        if np.any(diag <= 0):
            warnings.warn(
                "observed information is not positive definite; standard errors "
                "reported as NaN for the affected coordinates",
                stacklevel=2,
            )
        return 0.5 * (cov + cov.T), se
    eigval, eigvec = np.linalg.eigh(info)
    null = eigval <= 1e-10 * max(np.max(np.abs(eigval)), 1.0)
    cov = np.linalg.pinv(info, hermitian=True)
    affected = np.any(np.abs(eigvec[:, null]) > 1e-6, axis=1)
    diag = np.diag(cov).copy()
    se = np.sqrt(np.where(diag > 0, diag, np.nan))
    se[affected] = np.nan
    warnings.warn(
        f"observed information is singular; {int(affected.sum())} of {d} standard "
        "errors reported as NaN",
        stacklevel=2,
    )
    return 0.5 * (cov + cov.T), se


class ChangePointRtModel(BaseEstimator):
    """Log response-time model with a respondent-specific change-point.

    Each respondent's log RTs follow item-specific normals whose means shift
    by gamma_j after an unobserved change-point tau; tau and the latent speed
    are marginalized by Gauss-Hermite quadrature and the marginal likelihood
    is maximized with a two-stage quasi-Newton procedure.

    Parameters
    ----------
    boundary : int, default=5
        Boundary parameter c. Change-points live in {c+1, ..., J}; the
        first c+1 items carry no shift.
    n_quadrature : int, default=151
        Number of quadrature nodes for the latent-speed integral.
    quadrature : {"dense", "hermite"}, default="dense"
        Grid family. "dense" is a uniform midpoint grid with normal
        weights on [-quadrature_span, quadrature_span]; its resolution
        is independent of where each respondent's latent-speed posterior
        concentrates, which matters for long tests with small residual
        variances. "hermite" is classical Gauss-Hermite and is adequate
        for mild calibrations (wide sigma, small alpha) at much smaller
        node counts.
    quadrature_span : float, default=6.0
        Half-width of the dense grid; ignored for "hermite".
    max_iter_stage1 : int, default=100
        Iteration budget per stage-1 start (basin exploration).
    max_iter : int, default=2000
        Iteration cap for the stage-2 refit.
    gradient_tol : float, default=1e-4
        Sup-norm gradient tolerance; also the convergence criterion
        reported in ``converged_``. The objective is a sum over the full
        respondent-by-lattice array, whose double-precision noise floor
        leaves gradient sup-norms around 1e-5 on production-size data, so
        tolerances much below 1e-4 are rarely attainable.
    ridge_gamma : float, default=0.01
        Stage-1 ridge weight on the post-change shifts.
    ridge_psi1 : float, default=0.01
        Stage-1 ridge weight on the location parameter psi1.
    n_restarts : int, default=0
        Extra jittered starts; the best unpenalized likelihood wins, ties
        going to the earliest start.
    compute_se : bool, default=True
        Whether fit() computes the observed information, covariance and
        standard errors (skippable for speed in recovery studies).
    deterministic_reduction : bool, default=True
        Keep the respondent reduction order fixed so repeated fits are
        bit-identical. The current implementation always reduces in row
        order; False documents that any order would be acceptable.
    random_state : int or None
        Seed for the multistart jitter stream.

    Attributes
    ----------
    beta_, alpha_, gamma_, sigma_ : ndarray of shape (J,)
        Item parameter estimates; gamma_ is zero on the constrained columns.
    psi_ : ndarray of shape (3,)
        Structural estimates (psi1, psi2, psi3).
    theta_ : ndarray of shape (d,)
        Packed free-parameter vector (see likelihood.param_names).
    loglik_ : float
        Unpenalized marginal log-likelihood at the optimum.
    converged_ : bool
        True when the gradient sup-norm fell below ``gradient_tol``.
    n_iter_ : int
        Total quasi-Newton iterations across both stages.
    gradient_norm_ : float
        Gradient sup-norm at the returned optimum.
    information_, covariance_ : ndarray of shape (d, d)
        Observed information and its inverse (when compute_se=True).
    standard_errors_ : ndarray of shape (d,)
        Standard errors on the packed scale; NaN where unidentified.
    """

    def __init__(
        self,
        boundary=5,
        n_quadrature=151,
        quadrature="dense",
        quadrature_span=6.0,
        max_iter=2000,
        max_iter_stage1=100,
        gradient_tol=1e-4,
        ridge_gamma=0.01,
        ridge_psi1=0.01,
        n_restarts=0,
        compute_se=True,
        deterministic_reduction=True,
        random_state=None,
    ):
        self.boundary = boundary
        self.n_quadrature = n_quadrature
        self.quadrature = quadrature
        self.quadrature_span = quadrature_span
        self.max_iter = max_iter
        self.max_iter_stage1 = max_iter_stage1
        self.gradient_tol = gradient_tol
        self.ridge_gamma = ridge_gamma
        self.ridge_psi1 = ridge_psi1
        self.n_restarts = n_restarts
        self.compute_se = compute_se
        self.deterministic_reduction = deterministic_reduction
        self.random_state = random_state

    def _validate_options(self):
        if self.quadrature not in ("dense", "hermite"):
            raise ConfigError(f"unknown quadrature family {self.quadrature!r}")
        if self.max_iter < 1 or self.max_iter_stage1 < 1:
            raise ConfigError("iteration caps must be positive")
        if self.gradient_tol <= 0:
            raise ConfigError("gradient_tol must be strictly positive")
        if self.ridge_gamma < 0 or self.ridge_psi1 < 0:
            raise ConfigError("ridge penalties must be nonnegative")
        if self.n_restarts < 0:
            raise ConfigError("n_restarts must be nonnegative")

    def _fit_packed(self, X, frozen=None):
        """Shared fit driver; returns the raw result dict."""
        self._validate_options()
        config = ModelConfig(n_items=X.shape[1], boundary=self.boundary)
        if self.quadrature == "dense":
            grid = build_dense_grid(self.n_quadrature, self.quadrature_span)
        else:
            grid = build_grid(self.n_quadrature)
        result = fit_packed(
            X,
            config,
            grid,
            ridge_gamma=self.ridge_gamma,
            ridge_psi1=self.ridge_psi1,
            max_iter=self.max_iter,
            max_iter_stage1=self.max_iter_stage1,
            gradient_tol=self.gradient_tol,
            n_restarts=self.n_restarts,
            random_state=self.random_state,
            frozen=frozen,
        )
        return config, grid, result

    def fit(self, X, y=None):
        """Fit the model to an N x J matrix of log response times."""
        X = validate_rt_matrix(X)
        config, grid, result = self._fit_packed(X)
        self.n_features_in_ = X.shape[1]
        self.config_ = config
        self.grid_ = grid
        self.theta_ = result["theta"]
        items, psi = unpack_params(self.theta_, config)
        self.beta_ = items.beta
        self.alpha_ = items.alpha
        self.gamma_ = items.gamma
        self.sigma_ = items.sigma
        self.psi_ = psi.as_array()
        self.loglik_ = result["loglik"]
        self.converged_ = result["converged"]
        self.n_iter_ = result["n_iter"]
        self.gradient_norm_ = result["gradient_norm"]
        if self.compute_se:
            self.information_ = observed_information(
                X, self.theta_, grid, config, gradient_tol=self.gradient_tol
            )
            self.covariance_, self.standard_errors_ = covariance_and_se(self.information_)
        else:
            self.information_ = None
            self.covariance_ = None
            self.standard_errors_ = None
        return self

    def _check_fitted_X(self, X):
        if not hasattr(self, "theta_"):
            raise ConfigError("this model is not fitted yet; call fit first")
        return validate_rt_matrix(X, self.config_)

    def log_likelihood(self, X) -> float:
        """Total marginal log-likelihood of X under the fitted parameters."""
        X = self._check_fitted_X(X)
        return marginal_loglik(X, self.theta_, self.grid_, self.config_)

    def score(self, X, y=None) -> float:
        """Average marginal log-likelihood per respondent."""
        X = self._check_fitted_X(X)
        return float(np.mean(per_respondent_loglik(X, self.theta_, self.grid_, self.config_)))

    def predict_proba(self, X) -> np.ndarray:
        """Posterior distribution over change-point values, shape (N, J - c).

        Column t is P(tau = c+1+t | y_i); the last column is the no-change
        state tau = J.
        """
        X = self._check_fitted_X(X)
        lattice = posterior_weights(X, self.theta_, self.grid_, self.config_)
        return lattice.sum(axis=2)

    def predict(self, X) -> np.ndarray:
        """Modal change-point per respondent on the 1..J item scale.

        Ties resolve to the smallest tau (argmax over an ascending support).
        """
        probs = self.predict_proba(X)
        return self.config_.support[np.argmax(probs, axis=1)]

    def posterior_table(self, X) -> PosteriorTable:
        """Full per-respondent posterior summary table."""
        return PosteriorTable.from_probabilities(self.predict_proba(X), self.config_)

    def se_items(self):
        """Standard errors of (beta, alpha, gamma, sigma) per item.

        gamma entries for constrained items are NaN; sigma errors are
        delta-method transforms of the log-sigma errors.
        """
        if self.standard_errors_ is None:
            raise ConfigError("standard errors were not computed; refit with compute_se=True")
        sl = param_slices(self.config_)
        se_gamma = np.full(self.config_.n_items, np.nan)
        se_gamma[self.config_.free_gamma_columns] = self.standard_errors_[sl["gamma"]]
        return {
            "beta": self.standard_errors_[sl["beta"]],
            "alpha": self.standard_errors_[sl["alpha"]],
            "gamma": se_gamma,
            "sigma": self.sigma_ * self.standard_errors_[sl["log_sigma"]],
        }

    def se_psi(self):
        """Standard errors of (psi1, psi2, psi3)."""
        if self.standard_errors_ is None:
            raise ConfigError("standard errors were not computed; refit with compute_se=True")
        return self.standard_errors_[param_slices(self.config_)["psi"]]
