"""Inference on fitted models: one-sided Wald tests on the post-change
shifts with Holm correction, likelihood-ratio tests for the structural
parameters, and the delta-method interval for the no-change probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import chi2, norm

from .exceptions import ConfigError, EstimationError
from .likelihood import param_slices


def holm_adjust(p_raw) -> np.ndarray:
    """Holm step-down adjustment of raw p-values.

    Sorting ascending, adjusted_(i) = max over the prefix of
    (m - rank + 1) * p_(rank), capped at 1. NaN inputs stay NaN and do not
    count toward m.
    """
    p_raw = np.asarray(p_raw, dtype=float)
    adjusted = np.full(p_raw.shape, np.nan)
    defined = ~np.isnan(p_raw)
    m = int(defined.sum())
    if m == 0:
        return adjusted
    idx = np.flatnonzero(defined)
    order = idx[np.argsort(p_raw[idx], kind="stable")]
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, (m - rank) * p_raw[i])
        adjusted[i] = min(running, 1.0)
    return adjusted


@dataclass(frozen=True)
class WaldGammaTests:
    """One-sided Wald tests of gamma_j < 0 for each eligible item.

    ``item`` holds 1-based item numbers c+2..J; p-values are one-sided
    Phi(z) and ``p_holm`` applies the step-down correction across the
    defined tests. Items with zero or missing standard errors are left
    undefined (NaN throughout).
    """

    item: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p_raw: np.ndarray
    p_holm: np.ndarray

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.z)


def wald_tests_from_estimates(estimate, se, item) -> WaldGammaTests:
    """One-sided (negative-direction) Wald tests from raw estimate/SE pairs."""
    estimate = np.asarray(estimate, dtype=float)
    se = np.asarray(se, dtype=float)
    item = np.asarray(item)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where((se > 0) & np.isfinite(se), estimate / se, np.nan)
    p_raw = norm.cdf(z)
    p_raw[np.isnan(z)] = np.nan
    return WaldGammaTests(
        item=item, estimate=estimate, se=se, z=z, p_raw=p_raw, p_holm=holm_adjust(p_raw)
    )


def wald_gamma_tests(model) -> WaldGammaTests:
    """Test gamma_j < 0 per eligible item of a fitted model."""
    if getattr(model, "standard_errors_", None) is None:
        raise ConfigError("standard errors unavailable; fit with compute_se=True")
    sl = param_slices(model.config_)["gamma"]
    item = np.arange(model.config_.boundary + 2, model.config_.n_items + 1)
    return wald_tests_from_estimates(model.theta_[sl], model.standard_errors_[sl], item)


@dataclass(frozen=True)
class LrtResult:
    """Likelihood-ratio test of one structural parameter against zero."""

    parameter: str
    loglik_full: float
    loglik_constrained: float
    statistic: float
    p_value: float


def lrt_psi(model, X, which: str) -> LrtResult:
    """Refit with psi1 or psi3 frozen at zero and compare likelihoods.

    The statistic 2(l_full - l_constrained) is clamped at zero (numerical
    slack 1e-6) and referred to chi-square with one degree of freedom.
    """
    if which not in ("psi1", "psi3"):
        raise ConfigError(f"which must be 'psi1' or 'psi3', got {which!r}")
    if not hasattr(model, "theta_"):
        raise ConfigError("model must be fitted before running a likelihood-ratio test")
    psi_sl = param_slices(model.config_)["psi"]
    idx = psi_sl.start if which == "psi1" else psi_sl.start + 2
    _, _, constrained = model._fit_packed(X, frozen={idx: 0.0})
    stat = 2.0 * (model.loglik_ - constrained["loglik"])
    if stat < -1e-6:
        raise EstimationError(
            f"constrained refit exceeded the full likelihood by {-stat / 2:.3g} "
            f"(full {model.loglik_:.6f}, constrained {constrained['loglik']:.6f}); "
            "the full fit did not reach its optimum"
        )
    stat = max(stat, 0.0)
    return LrtResult(
        parameter=which,
        loglik_full=float(model.loglik_),
        loglik_constrained=float(constrained["loglik"]),
        statistic=float(stat),
        p_value=float(chi2.sf(stat, df=1)),
    )


def no_change_probability_ci(psi2: float, se_psi2: float, level: float = 0.95):
    """Delta-method interval for the no-change probability at average speed.

    The point estimate is logistic(psi2); its standard error is
    p(1-p) * se(psi2) and the interval is clamped to [0, 1].
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    p = float(expit(psi2))
    se_p = p * (1.0 - p) * float(se_psi2)
    zq = norm.ppf(0.5 + level / 2.0)
    lower = max(0.0, p - zq * se_p)
    upper = min(1.0, p + zq * se_p)
    return p, lower, upper
