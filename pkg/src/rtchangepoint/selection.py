"""Boundary-parameter selection by AIC, BIC, and the entropy-penalized ICL."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .exceptions import ConfigError, EstimationError, RtChangePointError
from .likelihood import n_free_params
from .model import ModelConfig, validate_rt_matrix

logger = logging.getLogger(__name__)

_TIE_TOL = 1e-9


@dataclass
class CandidateFit:
    """Criteria for one candidate boundary value."""

    boundary: int
    loglik: float = np.nan
    n_params: int = 0
    aic: float = np.nan
    bic: float = np.nan
    icl: float = np.nan
    entropy_total: float = np.nan
    failed: bool = False
    error: str = ""


@dataclass
class SelectionResult:
    """Per-candidate criteria plus the winner under each criterion.

    Winners are the criterion minimizers; ties within 1e-9 resolve to the
    larger boundary (the more parsimonious latent structure).
    """

    candidates: list[CandidateFit] = field(default_factory=list)
    selected: dict[str, int] = field(default_factory=dict)
    models: dict[int, object] = field(default_factory=dict)

    def as_rows(self) -> list[dict]:
        return [vars(c).copy() for c in self.candidates]


def _argmin_prefer_larger_boundary(values, boundaries):
    best = None
    for value, boundary in zip(values, boundaries):
        if np.isnan(value):
            continue
        if best is None or value < best[0] - _TIE_TOL:
            best = (value, boundary)
        elif abs(value - best[0]) <= _TIE_TOL and boundary > best[1]:
            best = (value, boundary)
    return best[1] if best else None


def select_boundary(X, candidates, estimator=None, keep_models=False) -> SelectionResult:
    """Fit the model for each candidate boundary and rank the fits.

    For each candidate c: BIC = -2 l + d_c log N, AIC = -2 l + 2 d_c, and
    ICL = BIC + 2 sum_i sum_tau (-p_hat log p_hat) with the plug-in
    posteriors of the fitted model. Failed candidates are recorded and
    skipped; if every candidate fails the selection itself fails.

    Parameters
    ----------
    X : array of shape (N, J)
        Log response times.
    candidates : iterable of int
        Boundary values, each with 1 <= c < J - 1.
    estimator : ChangePointRtModel, optional
        Prototype whose settings (quadrature size, tolerances, penalties)
        are cloned per candidate; the boundary is overridden.
    keep_models : bool
        Keep each fitted model in ``result.models`` (memory permitting).
    """
    from .estimator import ChangePointRtModel

    X = validate_rt_matrix(X)
    n, n_items = X.shape
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ConfigError("at least one candidate boundary is required")
    for c in candidates:
        ModelConfig(n_items=n_items, boundary=c)  # raises ConfigError when invalid
    prototype = estimator if estimator is not None else ChangePointRtModel()

    result = SelectionResult()
    for c in candidates:
        model = clone(prototype)
        model.set_params(boundary=c, compute_se=False)
        row = CandidateFit(boundary=c, n_params=n_free_params(ModelConfig(n_items, c)))
        try:
            model.fit(X)
            probs = model.predict_proba(X)
            with np.errstate(divide="ignore", invalid="ignore"):
                plogp = np.where(probs > 0.0, probs * np.log(probs), 0.0)
            entropy_total = -float(plogp.sum())
            row.loglik = model.loglik_
            row.entropy_total = entropy_total
            row.aic = -2.0 * row.loglik + 2.0 * row.n_params
            row.bic = -2.0 * row.loglik + row.n_params * np.log(n)
            row.icl = row.bic + 2.0 * entropy_total
            if keep_models:
                result.models[c] = model
        except RtChangePointError as exc:
            row.failed = True
            row.error = str(exc)
            logger.warning("candidate boundary %d failed: %s", c, exc)
        result.candidates.append(row)

    if all(c.failed for c in result.candidates):
        raise EstimationError("every candidate boundary failed to fit")
    boundaries = [c.boundary for c in result.candidates]
    for crit in ("aic", "bic", "icl"):
        values = [np.nan if c.failed else getattr(c, crit) for c in result.candidates]
        result.selected[crit] = _argmin_prefer_larger_boundary(values, boundaries)
    return result
