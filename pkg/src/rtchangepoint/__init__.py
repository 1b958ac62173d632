"""Latent change-point modeling of log response times.

The model extends the log-normal response-time model with an item-wise
mean shift after a respondent-specific latent change-point; estimation is
by quadrature-based marginal maximum likelihood. The package provides a
scikit-learn style estimator, posterior change-point inference, boundary
selection criteria, and a simulation-study harness, plus a command line
interface (``rtchangepoint --help``).
"""

from .estimator import ChangePointRtModel, initialize_parameters, observed_information
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateDataError,
    EstimationError,
    InitializationError,
    ParseError,
    RtChangePointError,
)
from .inference import (
    LrtResult,
    WaldGammaTests,
    holm_adjust,
    lrt_psi,
    no_change_probability_ci,
    wald_gamma_tests,
)
from .likelihood import (
    marginal_loglik,
    n_free_params,
    pack_params,
    param_names,
    param_slices,
    per_respondent_loglik,
    posterior_weights,
    score,
    unpack_params,
)
from .model import (
    ItemParams,
    ModelConfig,
    StructuralParams,
    changepoint_pmf,
    conditional_logdensity,
    residual,
    validate_rt_matrix,
)
from .posterior import (
    PosteriorTable,
    classify_changed,
    credible_set,
    entropy_normalized,
    posterior_mean,
)
from .quadrature import QuadratureGrid, build_grid
from .selection import SelectionResult, select_boundary
from .simulation import (
    RecoveryReport,
    SimCondition,
    TrueParams,
    draw_true_params,
    primary_grid,
    run_condition,
    run_grid,
    secondary_grid,
    simulate_dataset,
    simulate_respondent,
)

__version__ = "0.1.0"

__all__ = [
    "ChangePointRtModel",
    "ConfigError",
    "DataError",
    "DegenerateDataError",
    "EstimationError",
    "InitializationError",
    "ItemParams",
    "LrtResult",
    "ModelConfig",
    "ParseError",
    "PosteriorTable",
    "QuadratureGrid",
    "RecoveryReport",
    "RtChangePointError",
    "SelectionResult",
    "SimCondition",
    "StructuralParams",
    "TrueParams",
    "WaldGammaTests",
    "build_grid",
    "changepoint_pmf",
    "classify_changed",
    "conditional_logdensity",
    "credible_set",
    "draw_true_params",
    "entropy_normalized",
    "holm_adjust",
    "initialize_parameters",
    "lrt_psi",
    "marginal_loglik",
    "n_free_params",
    "no_change_probability_ci",
    "observed_information",
    "pack_params",
    "param_names",
    "param_slices",
    "per_respondent_loglik",
    "posterior_mean",
    "posterior_weights",
    "primary_grid",
    "residual",
    "run_condition",
    "run_grid",
    "score",
    "secondary_grid",
    "select_boundary",
    "simulate_dataset",
    "simulate_respondent",
    "unpack_params",
    "validate_rt_matrix",
    "wald_gamma_tests",
    "__version__",
]
