"""Numerical laboratory for Breuer-Major central limit rates.

Hermite expansions, exact stationary Gaussian simulation, Malliavin-Stein
functionals, contraction-diagram moments, distance estimators and rate
bounds, plus the ``bmlab`` command line harness.
"""

__version__ = "0.1.0"

from .covariance import CovarianceModel, lag_cutoff, summability  # noqa: E402
from .exceptions import (  # noqa: E402
    BMLabError,
    BudgetExceeded,
    ConfigError,
    DegeneratePoints,
    EmbeddingFailure,
    HermiteOverflowError,
    NormalizationError,
    NumericalError,
    RankError,
    TruncationWarning,
)
from .hermite import (  # noqa: E402
    HermiteSeries,
    abs_op_A,
    catalog,
    derivative,
    eval_hermite,
    eval_series,
    hermite_product,
    project,
    shift_T,
    sigma_sq,
)
from .paths import PathEnsemble, simulate, statistic_F, variance_F_exact  # noqa: E402

__all__ = [
    "__version__",
    "CovarianceModel",
    "HermiteSeries",
    "PathEnsemble",
    "BMLabError",
    "BudgetExceeded",
    "ConfigError",
    "DegeneratePoints",
    "EmbeddingFailure",
    "HermiteOverflowError",
    "NormalizationError",
    "NumericalError",
    "RankError",
    "TruncationWarning",
    "abs_op_A",
    "catalog",
    "derivative",
    "eval_hermite",
    "eval_series",
    "hermite_product",
    "lag_cutoff",
    "project",
    "shift_T",
    "sigma_sq",
    "simulate",
    "statistic_F",
    "summability",
    "variance_F_exact",
]
