"""Core model: domain types, the change-point distribution, and the
conditional density of a log response-time vector.

Conventions used throughout the package:

- Item columns are indexed 0..J-1 in arrays, but change-point values tau
  live on the 1..J item-number scale: tau is the last item answered under
  the baseline process, and tau = J encodes "no change within the test".
  Item j (0-based) is post-change iff j + 1 > tau, i.e. iff j >= tau.
- The admissible change-point support is {c+1, ..., J} where c is the
  boundary parameter. The first c+1 items carry no post-change shift
  (gamma fixed at zero), so the earliest estimable shift is on item c+2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_expit, logsumexp

from .exceptions import ConfigError, DataError


@dataclass(frozen=True)
class ModelConfig:
    """Structural dimensions of the model.

    Parameters
    ----------
    n_items : int
        Number of items J. Must be at least 3.
    boundary : int
        Boundary parameter c, with 1 <= c < J - 1. The change-point support
        is {c+1, ..., J}; c < J - 1 guarantees at least one admissible
        pre-terminal location.
    """

    n_items: int
    boundary: int

    def __post_init__(self):
        if self.n_items < 3:
            raise ConfigError(f"n_items must be >= 3, got {self.n_items}")
        if not 1 <= self.boundary < self.n_items - 1:
            raise ConfigError(
                f"boundary must satisfy 1 <= c < J - 1, got c={self.boundary} "
                f"with J={self.n_items}"
            )

    @property
    def support(self) -> np.ndarray:
        """Admissible change-point values {c+1, ..., J}; the last one is J."""
        return np.arange(self.boundary + 1, self.n_items + 1)

    @property
    def n_support(self) -> int:
        """Size of the change-point support, J - c."""
        return self.n_items - self.boundary

    @property
    def n_locations(self) -> int:
        """Number of pre-terminal locations {c+1, ..., J-1}, i.e. J - c - 1."""
        return self.n_items - self.boundary - 1

    @property
    def free_gamma_columns(self) -> np.ndarray:
        """0-based item columns with a free post-change shift (items c+2..J)."""
        return np.arange(self.boundary + 1, self.n_items)


@dataclass(frozen=True)
class ItemParams:
    """Per-item parameters on the log response-time scale.

    ``gamma`` stores the full length-J vector; entries for items 1..c+1
    (columns 0..c) are fixed storage, identically zero, and never treated
    as free parameters.
    """

    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    config: ModelConfig

    def __post_init__(self):
        J = self.config.n_items
        for name in ("beta", "alpha", "gamma", "sigma"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (J,):
                raise ConfigError(f"{name} must have shape ({J},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.sigma <= 0):
            raise DataError("all sigma_j must be strictly positive")
        constrained = self.gamma[: self.config.boundary + 1]
        if np.any(constrained != 0.0):
            raise ConfigError(
                "gamma must be exactly zero for the first c+1 items "
                f"(columns 0..{self.config.boundary})"
            )


@dataclass(frozen=True)
class StructuralParams:
    """Parameters of the change-point distribution.

    psi1 weights pre-terminal locations, psi2 is the no-change log-odds
    intercept, psi3 the latent-speed slope on those log-odds.
    """

    psi1: float
    psi2: float
    psi3: float

    def __post_init__(self):
        vals = (self.psi1, self.psi2, self.psi3)
        if not all(np.isfinite(v) for v in vals):
            raise DataError(f"structural parameters must be finite, got {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.psi1, self.psi2, self.psi3])


def validate_rt_matrix(y, config: ModelConfig | None = None) -> np.ndarray:
    """Validate an N x J matrix of log response times.

    Entries must be finite (no missing values); the column count must match
    ``config.n_items`` when a config is given.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] < 1:
        raise DataError(f"expected a 2-d matrix with at least one row, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        bad = np.argwhere(~np.isfinite(y))[0]
        raise DataError(f"non-finite log response time at row {bad[0]}, column {bad[1]}")
    if config is not None and y.shape[1] != config.n_items:
        raise ConfigError(
            f"data has {y.shape[1]} columns but the model expects {config.n_items} items"
        )
    return y


def location_logweights(psi1: float, n_locations: int) -> np.ndarray:
    """Log of the normalized exponential weights over pre-terminal locations.

    Location ell = tau - c - 1 ranges over 0..n_locations-1 and receives
    weight exp(ell * psi1) / Z(psi1). The max term is factored out so the
    result is finite for arbitrarily large |psi1|.
    """
    ell = np.arange(n_locations)
    logits = ell * float(psi1)
    return logits - logsumexp(logits)


def location_weight_mean(psi1: float, n_locations: int) -> float:
    """Mean of ell = 0..n_locations-1 under the normalized location weights."""
    ell = np.arange(n_locations)
    return float(np.sum(ell * np.exp(location_logweights(psi1, n_locations))))


def changepoint_log_pmf_table(xi, psi: StructuralParams, config: ModelConfig) -> np.ndarray:
    """Log pmf of the change-point over the full support, per latent speed.

    Parameters
    ----------
    xi : array of shape (K,)
        Latent speed values.
    psi : StructuralParams
    config : ModelConfig

    Returns
    -------
    ndarray of shape (n_support, K)
        Row t is the log probability of support value c+1+t; the last row
        is the no-change state tau = J.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = psi.psi2 + psi.psi3 * xi
    log_q = log_expit(eta)        # log P(tau = J | xi)
    log_1mq = log_expit(-eta)     # log P(tau < J | xi)
    table = np.empty((config.n_support, xi.shape[0]))
    table[:-1, :] = location_logweights(psi.psi1, config.n_locations)[:, None] + log_1mq[None, :]
    table[-1, :] = log_q
    return table


def changepoint_pmf(tau: int, xi: float, psi: StructuralParams, config: ModelConfig) -> float:
    """P(tau | xi, psi) for one admissible change-point value.

    tau = J returns the no-change probability logistic(psi2 + psi3 * xi);
    tau < J returns the normalized location weight times 1 minus that.
    """
    if not config.boundary + 1 <= tau <= config.n_items:
        raise ConfigError(
            f"tau={tau} outside the admissible support "
            f"{{{config.boundary + 1}, ..., {config.n_items}}}"
        )
    table = changepoint_log_pmf_table(np.array([float(xi)]), psi, config)
    return float(np.exp(table[tau - config.boundary - 1, 0]))


def postchange_indicator(tau: int, config: ModelConfig) -> np.ndarray:
    """Boolean length-J vector marking items after the change-point."""
    return np.arange(config.n_items) >= tau


def residual(y_ij: float, j: int, xi: float, tau: int, items: ItemParams) -> float:
    """Conditional residual of item column j (0-based) given (xi, tau).

    r = y - beta_j + alpha_j * xi - gamma_j * 1(item j is post-change).
    """
    shift = items.gamma[j] if j >= tau else 0.0
    return float(y_ij - items.beta[j] + items.alpha[j] * xi - shift)


def conditional_logdensity(
    y, xi: float, tau: int, items: ItemParams, config: ModelConfig
) -> float:
    """Log density of one log-RT vector given latent speed and change-point.

    Sum over items of the normal log density with mean
    beta_j - alpha_j * xi + gamma_j * 1(j post-change) and sd sigma_j.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (config.n_items,):
        raise DataError(f"y must have shape ({config.n_items},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DataError("y must be finite")
    if not config.boundary + 1 <= tau <= config.n_items:
        raise ConfigError(f"tau={tau} outside the admissible support")
    shift = np.where(postchange_indicator(tau, config), items.gamma, 0.0)
    r = y - items.beta + items.alpha * xi - shift
    return float(
        np.sum(-0.5 * np.log(2.0 * np.pi * items.sigma**2) - r**2 / (2.0 * items.sigma**2))
    )
