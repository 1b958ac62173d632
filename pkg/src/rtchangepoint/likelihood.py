"""Marginal log-likelihood, posterior weights over the (tau, node) lattice,
and the analytic score of the change-point response-time model.

The free parameter vector theta has length d = 3J + (J - c - 1) + 3 and is
ordered as (beta_1..beta_J, alpha_1..alpha_J, gamma_{c+2}..gamma_J,
log sigma_1..log sigma_J, psi1, psi2, psi3). Residual standard deviations
are optimized on the log scale so the optimizer is unconstrained; the
sigma score block is chain-ruled accordingly.

Evaluation exploits that the conditional log-density is quadratic in the
latent speed: per respondent it reduces to a (support x node) exponent
built from O(J) sufficient statistics, so the cost per call is
O(N (J + S K)) with S = J - c support points, independent of J x K cross
terms. Everything runs in log space with a final log-sum-exp, so the
likelihood stays finite for long tests and extreme parameter values.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .exceptions import ConfigError, EstimationError
from .model import (
    ItemParams,
    ModelConfig,
    StructuralParams,
    location_logweights,
    location_weight_mean,
    validate_rt_matrix,
)
from .quadrature import QuadratureGrid

_LOG_2PI = np.log(2.0 * np.pi)


def n_free_params(config: ModelConfig) -> int:
    """Dimension d of the free parameter vector."""
    return 3 * config.n_items + config.n_locations + 3


def param_slices(config: ModelConfig) -> dict[str, slice]:
    """Slices of each block within the packed vector, keyed by block name."""
    J = config.n_items
    F = config.n_locations
    return {
        "beta": slice(0, J),
        "alpha": slice(J, 2 * J),
        "gamma": slice(2 * J, 2 * J + F),
        "log_sigma": slice(2 * J + F, 3 * J + F),
        "psi": slice(3 * J + F, 3 * J + F + 3),
    }


def param_names(config: ModelConfig) -> list[str]:
    """Human-readable name of each packed coordinate, in packing order."""
    J = config.n_items
    names = [f"beta_{j}" for j in range(1, J + 1)]
    names += [f"alpha_{j}" for j in range(1, J + 1)]
    names += [f"gamma_{j}" for j in range(config.boundary + 2, J + 1)]
    names += [f"log_sigma_{j}" for j in range(1, J + 1)]
    names += ["psi1", "psi2", "psi3"]
    return names


def pack_params(items: ItemParams, psi: StructuralParams, config: ModelConfig) -> np.ndarray:
    """Flatten item and structural parameters into the free vector."""
    sl = param_slices(config)
    theta = np.empty(n_free_params(config))
    theta[sl["beta"]] = items.beta
    theta[sl["alpha"]] = items.alpha
    theta[sl["gamma"]] = items.gamma[config.free_gamma_columns]
    theta[sl["log_sigma"]] = np.log(items.sigma)
    theta[sl["psi"]] = psi.as_array()
    return theta


def unpack_params(theta: np.ndarray, config: ModelConfig) -> tuple[ItemParams, StructuralParams]:
    """Inverse of :func:`pack_params`; constrained gamma entries come back as 0."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_free_params(config),):
        raise ConfigError(
            f"theta must have length {n_free_params(config)}, got shape {theta.shape}"
        )
    sl = param_slices(config)
    gamma = np.zeros(config.n_items)
    gamma[config.free_gamma_columns] = theta[sl["gamma"]]
    items = ItemParams(
        beta=theta[sl["beta"]].copy(),
        alpha=theta[sl["alpha"]].copy(),
        gamma=gamma,
        sigma=np.exp(theta[sl["log_sigma"]]),
        config=config,
    )
    psi = StructuralParams(*theta[sl["psi"]])
    return items, psi


class _Workspace:
    """Sufficient statistics shared by the likelihood and score blocks.

    For fixed (tau, xi) the conditional log-density is
    const - a_i - b_i xi - c xi^2 + u_it + v_t xi, where (a, b, c) come
    from the unshifted residuals e = y - beta and (u, v) are suffix sums
    over the post-change columns. The joint log mass over the lattice is
    then row_it - (b_i - v_t) xi_k + node_tk.
    """

    def __init__(self, y, items, psi, grid, config):
        J = config.n_items
        c = config.boundary
        xi = grid.nodes
        w = 1.0 / (2.0 * items.sigma**2)
        e = y - items.beta
        self.e = e
        self.a = (e * e) @ w
        self.b = 2.0 * (e @ (w * items.alpha))
        self.c_quad = float(w @ (items.alpha**2))
        self.const = -0.5 * J * _LOG_2PI - float(np.sum(np.log(items.sigma)))

        # Suffix sums over post-change columns j >= tau, one per support
        # value; the last support value (tau = J) shifts nothing.
        free = config.free_gamma_columns
        g = items.gamma[free]
        wf = w[free]
        col_u = e[:, free] * (2.0 * g * wf) - (g * g * wf)
        s = config.n_support
        u = np.zeros((y.shape[0], s))
        u[:, :-1] = col_u[:, ::-1].cumsum(axis=1)[:, ::-1]
        v = np.zeros(s)
        v[:-1] = (2.0 * wf * g * items.alpha[free])[::-1].cumsum()[::-1]
        self.u = u
        self.v = v

        eta = psi.psi2 + psi.psi3 * xi
        self.q = expit(eta)
        loc = location_logweights(psi.psi1, config.n_locations)
        row = self.u + (self.const - self.a)[:, None]
        row[:, :-1] += loc[None, :]
        self.row = row
        base_k = grid.log_weights - self.c_quad * xi**2
        node = np.empty((s, xi.shape[0]))
        node[:-1, :] = (base_k + log_expit(-eta))[None, :]
        node[-1, :] = base_k + log_expit(eta)
        self.node = node
        self.coeff = self.b[:, None] - v[None, :]
        self.xi = xi

    def log_lattice(self) -> np.ndarray:
        """Joint log mass log[w_k f(y_i | xi_k, tau_t) P(tau_t | xi_k)].

        Built in place: one (N, S, K) buffer, no intermediate temporaries.
        """
        out = np.multiply(self.coeff[:, :, None], -self.xi, order="C")
        out += self.row[:, :, None]
        out += self.node[None, :, :]
        return out


def _lattice_and_ll(y, theta, grid, config):
    items, psi = unpack_params(theta, config)
    ws = _Workspace(y, items, psi, grid, config)
    log_lattice = ws.log_lattice()
    ll = logsumexp(log_lattice.reshape(y.shape[0], -1), axis=1)
    if not np.all(np.isfinite(ll)):
        i = int(np.flatnonzero(~np.isfinite(ll))[0])
        raise EstimationError(f"non-finite marginal likelihood for respondent {i}")
    return items, psi, ws, log_lattice, ll


def per_respondent_loglik(y, theta, grid: QuadratureGrid, config: ModelConfig) -> np.ndarray:
    """Marginal log-likelihood contribution of each respondent."""
    y = validate_rt_matrix(y, config)
    return _lattice_and_ll(y, theta, grid, config)[4]


def marginal_loglik(y, theta, grid: QuadratureGrid, config: ModelConfig) -> float:
    """Total marginal log-likelihood, summed over respondents in row order."""
    return float(np.sum(per_respondent_loglik(y, theta, grid, config)))


def posterior_weights(y, theta, grid: QuadratureGrid, config: ModelConfig) -> np.ndarray:
    """Normalized posterior mass over the (tau, node) lattice.

    Returns an array of shape (N, S, K); entry [i, t, k] is the posterior
    probability that respondent i has change-point c+1+t and latent speed
    node k. Each respondent's lattice sums to one.
    """
    y = validate_rt_matrix(y, config)
    _, _, _, log_lattice, ll = _lattice_and_ll(y, theta, grid, config)
    return np.exp(log_lattice - ll[:, None, None])


def loglik_and_score(y, theta, grid: QuadratureGrid, config: ModelConfig):
    """Marginal log-likelihood and its exact gradient in one pass.

    Every gradient block is the posterior expectation of the complete-data
    score. Because the complete-data score is polynomial (degree <= 2) in
    the latent speed, all blocks reduce to the posterior lattice moments
    sum_k p[i, t, k] xi_k^m for m = 0, 1, 2 plus O(J) column statistics.
    """
    y = validate_rt_matrix(y, config)
    items, psi = unpack_params(theta, config)
    ws = _Workspace(y, items, psi, grid, config)
    n, J = y.shape
    n_support = config.n_support
    xi = ws.xi

    lat = ws.log_lattice()
    flat = lat.reshape(n, -1)
    mx = flat.max(axis=1)
    np.subtract(flat, mx[:, None], out=flat)
    np.exp(flat, out=flat)  # lat now holds unnormalized posterior mass
    norm = flat.sum(axis=1)
    ll = mx + np.log(norm)
    if not np.all(np.isfinite(ll)):
        i = int(np.flatnonzero(~np.isfinite(ll))[0])
        raise EstimationError(f"non-finite marginal likelihood for respondent {i}")

    # All three node moments in one GEMM over the lattice.
    basis = np.stack([np.ones_like(xi), xi, xi * xi], axis=1)
    moments = (lat.reshape(n * n_support, -1) @ basis).reshape(n, n_support, 3)
    moments /= norm[:, None, None]
    t0 = moments[:, :, 0]  # (N, S) posterior over support
    t1 = moments[:, :, 1]  # first latent-speed moment per support value
    t2 = moments[:, :, 2]
    m1 = t1.sum(axis=1)  # E[xi | y_i]
    m2 = t2.sum(axis=1)
    # Posterior mass with tau <= column: cumulative over pre-terminal support.
    # Column c+1+u is shifted exactly for support indices t <= u.
    c0 = np.cumsum(t0[:, :-1], axis=1)  # (N, F)
    c1 = np.cumsum(t1[:, :-1], axis=1)

    e = ws.e
    free = config.free_gamma_columns
    alpha = items.alpha
    gamma_f = items.gamma[free]
    alpha_f = alpha[free]
    inv_s2 = 1.0 / items.sigma**2

    e_sum = e.sum(axis=0)
    e2_sum = (e * e).sum(axis=0)
    em1 = e.T @ m1
    s_m1 = float(m1.sum())
    s_m2 = float(m2.sum())
    sc0 = c0.sum(axis=0)
    sc1 = c1.sum(axis=0)
    ec0 = (e[:, free] * c0).sum(axis=0)
    ec1 = (e[:, free] * c1).sum(axis=0)

    d_beta = (e_sum + alpha * s_m1) * inv_s2
    d_beta[free] -= gamma_f * sc0 * inv_s2[free]
    d_alpha = -(em1 + alpha * s_m2) * inv_s2
    d_alpha[free] += gamma_f * sc1 * inv_s2[free]
    d_gamma = (ec0 + alpha_f * sc1 - gamma_f * sc0) * inv_s2[free]
    r2_sum = e2_sum + 2.0 * alpha * em1 + alpha**2 * s_m2
    r2_sum[free] += -2.0 * gamma_f * (ec0 + alpha_f * sc1) + gamma_f**2 * sc0
    d_log_sigma = r2_sum * inv_s2 - n

    loc_mean = location_weight_mean(psi.psi1, config.n_locations)
    st0 = t0.sum(axis=0)  # (S,) total posterior mass per support value
    loc = np.arange(config.n_locations)
    d_psi1 = float(loc @ st0[:-1] - loc_mean * st0[:-1].sum())
    inv_norm = 1.0 / norm
    g0 = inv_norm @ lat.sum(axis=1)  # (K,) total mass per node
    gj0 = inv_norm @ lat[:, -1, :]  # (K,) no-change mass per node
    resid_q = gj0 - ws.q * g0
    d_psi2 = float(resid_q.sum())
    d_psi3 = float(resid_q @ xi)

    grad = np.concatenate([d_beta, d_alpha, d_gamma, d_log_sigma, [d_psi1, d_psi2, d_psi3]])
    return float(ll.sum()), grad


def score(y, theta, grid: QuadratureGrid, config: ModelConfig) -> np.ndarray:
    """Gradient of :func:`marginal_loglik` with respect to theta."""
    return loglik_and_score(y, theta, grid, config)[1]
