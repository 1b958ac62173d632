"""Respondent-level posterior summaries of the change-point location."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError
from .model import ModelConfig


def credible_set(probs, support, alpha: float) -> np.ndarray:
    """Highest-posterior-probability credible set for one respondent.

    Support values are sorted by descending probability (ties toward the
    smaller change-point) and the shortest prefix with cumulative mass at
    least 1 - alpha is returned, in that greedy order.
    """
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    probs = np.asarray(probs, dtype=float)
    support = np.asarray(support)
    order = np.lexsort((support, -probs))
    cum = np.cumsum(probs[order])
    # 1e-12 slack so alpha=0 stops at the last nonzero-probability point
    # instead of chasing rounding residue into zero-mass values.
    n_keep = int(np.searchsorted(cum, 1.0 - alpha - 1e-12) + 1)
    return support[order[:n_keep]]


def entropy_normalized(probs, config: ModelConfig) -> float:
    """Posterior entropy scaled by log(J - c) to lie in [0, 1].

    Zero-probability points contribute nothing (0 log 0 = 0).
    """
    if config.n_support < 2:
        raise ConfigError("normalized entropy needs a support of at least 2 points")
    probs = np.asarray(probs, dtype=float)
    nz = probs[probs > 0.0]
    h = -float(np.sum(nz * np.log(nz)))
    return h / np.log(config.n_support)


def posterior_mean(probs, support) -> float:
    """Posterior mean change-point, including the no-change state tau = J."""
    return float(np.asarray(probs, dtype=float) @ np.asarray(support, dtype=float))


def classify_changed(p_change, threshold: float = 0.5) -> np.ndarray:
    """Changed/unchanged classification: changed iff p_change >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    return np.asarray(p_change, dtype=float) >= threshold


@dataclass(frozen=True)
class PosteriorTable:
    """Posterior change-point distributions and derived summaries.

    Attributes
    ----------
    support : ndarray of shape (S,)
        Change-point values {c+1, ..., J}; the last entry is J (no change).
    probs : ndarray of shape (N, S)
        Per-respondent posterior over the support; rows sum to one.
    mode : ndarray of shape (N,)
        Modal change-point, ties toward the smaller value.
    mean : ndarray of shape (N,)
        Posterior mean change-point.
    p_change : ndarray of shape (N,)
        P(tau < J), computed as exactly 1 - probs[:, -1].
    entropy : ndarray of shape (N,)
        Normalized posterior entropy in [0, 1].
    """

    support: np.ndarray
    probs: np.ndarray
    mode: np.ndarray
    mean: np.ndarray
    p_change: np.ndarray
    entropy: np.ndarray
    config: ModelConfig

    @classmethod
    def from_probabilities(cls, probs, config: ModelConfig) -> "PosteriorTable":
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] != config.n_support:
            raise DataError(
                f"probs must have shape (N, {config.n_support}), got {probs.shape}"
            )
        support = config.support
        mode = support[np.argmax(probs, axis=1)]
        mean = probs @ support.astype(float)
        p_change = 1.0 - probs[:, -1]
        entropy = np.array([entropy_normalized(row, config) for row in probs])
        return cls(
            support=support,
            probs=probs,
            mode=mode,
            mean=mean,
            p_change=p_change,
            entropy=entropy,
            config=config,
        )

    @property
    def n_respondents(self) -> int:
        return self.probs.shape[0]

    def credible_set(self, i: int, alpha: float) -> np.ndarray:
        """Credible set of respondent i at level 1 - alpha."""
        return credible_set(self.probs[i], self.support, alpha)

    def classify(self, threshold: float = 0.5) -> np.ndarray:
        """Boolean changed-flag per respondent at the given threshold."""
        return classify_changed(self.p_change, threshold)
