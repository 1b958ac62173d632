"""Simulation harness: model-based data generation, recovery metrics, and
the primary/secondary condition grids.

Random numbers come from counter-based Philox streams keyed by
(master seed, condition, replication, stream), so replications and
respondents can be generated independently, in any order, and in parallel
without stream overlap.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .exceptions import ConfigError, EstimationError, RtChangePointError
from .likelihood import pack_params, param_slices
from .model import (
    ItemParams,
    ModelConfig,
    StructuralParams,
    changepoint_log_pmf_table,
)
from .posterior import PosteriorTable

logger = logging.getLogger(__name__)

_PARAM_STREAM = 0
_RESPONDENT_STREAM_BASE = 1

DEFAULT_PSI1 = 0.2
DEFAULT_PSI3 = -0.5


@dataclass(frozen=True)
class SimCondition:
    """One cell of a simulation design.

    ``prevalence`` is the target probability of a change-point at average
    speed; the no-change intercept psi2 is derived from it as
    log((1 - prevalence) / prevalence) and never stored.
    """

    n_respondents: int
    n_items: int
    boundary: int
    prevalence: float
    psi1: float = DEFAULT_PSI1
    psi3: float = DEFAULT_PSI3
    n_replications: int = 50
    master_seed: int = 0
    # post-change shift draw bounds; negative ranges generate acceleration
    gamma_low: float = 0.3
    gamma_high: float = 0.8

    def __post_init__(self):
        ModelConfig(n_items=self.n_items, boundary=self.boundary)
        if not 0.0 < self.prevalence < 1.0:
            raise ConfigError(f"prevalence must lie in (0, 1), got {self.prevalence}")
        if self.n_respondents < 1:
            raise ConfigError("n_respondents must be positive")
        if self.n_replications < 1:
            raise ConfigError("n_replications must be positive")
        if self.gamma_low > self.gamma_high:
            raise ConfigError("gamma_low must not exceed gamma_high")

    @property
    def psi2(self) -> float:
        return float(np.log((1.0 - self.prevalence) / self.prevalence))

    @property
    def config(self) -> ModelConfig:
        return ModelConfig(n_items=self.n_items, boundary=self.boundary)

    @property
    def label(self) -> str:
        return (
            f"N{self.n_respondents}_J{self.n_items}_c{self.boundary}"
            f"_pi{self.prevalence:g}"
        )

    def stream(self, replication: int, stream_id: int) -> np.random.Generator:
        """Philox stream keyed by (master seed, this condition, replication, stream).

        The 128-bit Philox key is a SHA-256 digest of the tuple, so every
        replication and respondent draws from its own counter-based stream.
        """
        text = (
            f"{self.master_seed}|{self.n_respondents}|{self.n_items}|{self.boundary}|"
            f"{self.prevalence!r}|{self.psi1!r}|{self.psi3!r}|"
            f"{self.gamma_low!r}|{self.gamma_high!r}|{replication}|{stream_id}"
        )
        digest = hashlib.sha256(text.encode()).digest()
        key = np.frombuffer(digest[:16], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class TrueParams:
    """Generating parameters plus the latent draws of one replication."""

    items: ItemParams
    psi: StructuralParams
    xi: np.ndarray | None = None
    tau: np.ndarray | None = None

    def packed(self, config: ModelConfig) -> np.ndarray:
        return pack_params(self.items, self.psi, config)


def draw_true_params(condition: SimCondition, rng: np.random.Generator) -> TrueParams:
    """Draw generating item parameters from their calibration ranges.

    beta ~ U(3, 4), alpha ~ U(0.5, 1.5), sigma ~ U(0.2, 0.4), and
    gamma ~ U(gamma_low, gamma_high) (default (0.3, 0.8), slowing) on the
    estimable items, zero elsewhere; structural parameters come from the
    condition.
    """
    config = condition.config
    J = config.n_items
    beta = rng.uniform(3.0, 4.0, J)
    alpha = rng.uniform(0.5, 1.5, J)
    gamma = np.zeros(J)
    gamma[config.free_gamma_columns] = rng.uniform(
        condition.gamma_low, condition.gamma_high, config.n_locations
    )
    sigma = rng.uniform(0.2, 0.4, J)
    items = ItemParams(beta=beta, alpha=alpha, gamma=gamma, sigma=sigma, config=config)
    psi = StructuralParams(condition.psi1, condition.psi2, condition.psi3)
    return TrueParams(items=items, psi=psi)


def simulate_respondent(true_params: TrueParams, condition: SimCondition, rng):
    """One respondent: latent speed, change-point, and log RT row.

    The change-point is drawn by inverse CDF from the model-implied
    distribution at the drawn latent speed.
    """
    config = condition.config
    xi = float(rng.standard_normal())
    pmf = np.exp(changepoint_log_pmf_table(np.array([xi]), true_params.psi, config)[:, 0])
    cum = np.cumsum(pmf)
    idx = min(int(np.searchsorted(cum, rng.random(), side="right")), config.n_support - 1)
    tau = int(config.support[idx])
    items = true_params.items
    shift = np.where(np.arange(config.n_items) >= tau, items.gamma, 0.0)
    mean = items.beta - items.alpha * xi + shift
    y = rng.normal(mean, items.sigma)
    return y, xi, tau


def simulate_dataset(condition: SimCondition, replication: int = 0):
    """Full replication: true parameters and an N x J log-RT matrix.

    Returns (true_params, y) where true_params carries the per-respondent
    latent draws. Bitwise reproducible given (condition, replication).
    """
    true = draw_true_params(condition, condition.stream(replication, _PARAM_STREAM))
    n = condition.n_respondents
    y = np.empty((n, condition.n_items))
    xi = np.empty(n)
    tau = np.empty(n, dtype=int)
    for i in range(n):
        rng = condition.stream(replication, _RESPONDENT_STREAM_BASE + i)
        y[i], xi[i], tau[i] = simulate_respondent(true, condition, rng)
    return TrueParams(items=true.items, psi=true.psi, xi=xi, tau=tau), y


@dataclass
class RecoveryReport:
    """Recovery metrics of one condition, aggregated across replications.

    Item-level arrays have length J with NaN where a parameter does not
    exist (gamma outside the admissible window). ``errors_*`` keep the raw
    per-replication estimate-minus-truth values; biases are their means
    and RMSEs the root mean squares over completed replications.
    """

    condition: SimCondition
    n_completed: int = 0
    n_failed: int = 0
    errors_beta: np.ndarray | None = None
    errors_alpha: np.ndarray | None = None
    errors_gamma: np.ndarray | None = None
    errors_sigma: np.ndarray | None = None
    errors_psi: np.ndarray | None = None
    mae_mode_per_rep: np.ndarray | None = None
    mae_mean_per_rep: np.ndarray | None = None
    failures: list = field(default_factory=list)

    @staticmethod
    def _bias(errors):
        return np.mean(errors, axis=0)

    @staticmethod
    def _rmse(errors):
        return np.sqrt(np.mean(errors**2, axis=0))

    @property
    def bias_beta(self):
        return self._bias(self.errors_beta)

    @property
    def rmse_beta(self):
        return self._rmse(self.errors_beta)

    @property
    def bias_alpha(self):
        return self._bias(self.errors_alpha)

    @property
    def rmse_alpha(self):
        return self._rmse(self.errors_alpha)

    @property
    def bias_gamma(self):
        return self._bias(self.errors_gamma)

    @property
    def rmse_gamma(self):
        return self._rmse(self.errors_gamma)

    @property
    def bias_sigma(self):
        return self._bias(self.errors_sigma)

    @property
    def rmse_sigma(self):
        return self._rmse(self.errors_sigma)

    @property
    def bias_psi(self):
        return self._bias(self.errors_psi)

    @property
    def rmse_psi(self):
        return self._rmse(self.errors_psi)

    @property
    def mae_mode(self) -> float:
        return float(np.mean(self.mae_mode_per_rep))

    @property
    def mae_mean(self) -> float:
        return float(np.mean(self.mae_mean_per_rep))


def _replicate(condition: SimCondition, replication: int, fit_params: dict, stub: bool):
    """Run one replication; returns an error-record dict or a failure string."""
    from .estimator import ChangePointRtModel

    config = condition.config
    true, y = simulate_dataset(condition, replication)
    if stub:
        est_items, est_psi = true.items, true.psi
        mode = true.tau.astype(float)
        post_mean = true.tau.astype(float)
    else:
        model = ChangePointRtModel(
            boundary=condition.boundary, compute_se=False, **fit_params
        )
        model.fit(y)
        est_items = ItemParams(model.beta_, model.alpha_, model.gamma_, model.sigma_, config)
        est_psi = StructuralParams(*model.psi_)
        table = model.posterior_table(y)
        mode = table.mode.astype(float)
        post_mean = table.mean
    gamma_err = np.full(config.n_items, np.nan)
    free = config.free_gamma_columns
    gamma_err[free] = est_items.gamma[free] - true.items.gamma[free]
    return {
        "beta": est_items.beta - true.items.beta,
        "alpha": est_items.alpha - true.items.alpha,
        "gamma": gamma_err,
        "sigma": est_items.sigma - true.items.sigma,
        "psi": est_psi.as_array() - true.psi.as_array(),
        "mae_mode": float(np.mean(np.abs(mode - true.tau))),
        "mae_mean": float(np.mean(np.abs(post_mean - true.tau))),
    }


def run_condition(
    condition: SimCondition,
    n_jobs: int = 1,
    stub_perfect_recovery: bool = False,
    max_failure_rate: float = 0.2,
    **fit_params,
) -> RecoveryReport:
    """Simulate, fit, and score every replication of one condition.

    The boundary parameter is treated as known and fixed at its true value.
    Replications whose fit raises are excluded and counted; when more than
    ``max_failure_rate`` of them fail the whole condition errors out.
    ``stub_perfect_recovery`` bypasses fitting and scores the truth against
    itself (harness self-test). Extra keyword arguments are passed to the
    estimator.
    """

    def one(rep):
        try:
            return rep, _replicate(condition, rep, fit_params, stub_perfect_recovery)
        except RtChangePointError as exc:
            return rep, f"{type(exc).__name__}: {exc}"

    results = Parallel(n_jobs=n_jobs)(
        delayed(one)(rep) for rep in range(condition.n_replications)
    )
    report = RecoveryReport(condition=condition)
    records = []
    for rep, outcome in sorted(results, key=lambda t: t[0]):
        if isinstance(outcome, str):
            report.n_failed += 1
            report.failures.append((rep, outcome))
            logger.warning("replication %d failed: %s", rep, outcome)
        else:
            records.append(outcome)
    report.n_completed = len(records)
    if report.n_failed > max_failure_rate * condition.n_replications:
        raise EstimationError(
            f"{report.n_failed} of {condition.n_replications} replications failed "
            f"for condition {condition.label}"
        )
    if not records:
        raise EstimationError(f"no replication completed for condition {condition.label}")
    report.errors_beta = np.array([r["beta"] for r in records])
    report.errors_alpha = np.array([r["alpha"] for r in records])
    report.errors_gamma = np.array([r["gamma"] for r in records])
    report.errors_sigma = np.array([r["sigma"] for r in records])
    report.errors_psi = np.array([r["psi"] for r in records])
    report.mae_mode_per_rep = np.array([r["mae_mode"] for r in records])
    report.mae_mean_per_rep = np.array([r["mae_mean"] for r in records])
    return report


def primary_grid(n_replications: int = 50, master_seed: int = 0) -> list[SimCondition]:
    """Nine conditions crossing boundary {5, 10, 15} with prevalence
    {0.15, 0.25, 0.40} at N=256, J=20."""
    return [
        SimCondition(
            n_respondents=256,
            n_items=20,
            boundary=c,
            prevalence=pi,
            n_replications=n_replications,
            master_seed=master_seed,
        )
        for c in (5, 10, 15)
        for pi in (0.15, 0.25, 0.40)
    ]


def secondary_grid(n_replications: int = 50, master_seed: int = 0) -> list[SimCondition]:
    """Nine conditions crossing N {200, 600, 1800} with J {20, 30, 40} at
    prevalence 0.15; the boundary (12, 18, 24) keeps its relative position
    matched to the test length."""
    return [
        SimCondition(
            n_respondents=n,
            n_items=j,
            boundary=c,
            prevalence=0.15,
            n_replications=n_replications,
            master_seed=master_seed,
        )
        for j, c in ((20, 12), (30, 18), (40, 24))
        for n in (200, 600, 1800)
    ]


def run_grid(
    grid,
    n_jobs: int = 1,
    n_replications: int = 50,
    master_seed: int = 0,
    **kwargs,
) -> list[RecoveryReport]:
    """Run a named grid ('primary' or 'secondary') or a custom condition list."""
    if grid == "primary":
        conditions = primary_grid(n_replications, master_seed)
    elif grid == "secondary":
        conditions = secondary_grid(n_replications, master_seed)
    elif isinstance(grid, str):
        raise ConfigError(f"unknown grid {grid!r}; use 'primary', 'secondary', or a list")
    else:
        conditions = list(grid)
    return [run_condition(cond, n_jobs=n_jobs, **kwargs) for cond in conditions]
