"""Bidimensional integrative factorization of linked data matrices."""
from .impute import ImputeConfig, impute
from .linalg import nuclear_norm, numerical_rank, soft_threshold_svd, thin_svd
from .linked import (
    BlockGrid,
    Centering,
    PenaltyScheme,
    ScaleInfo,
    assemble_concat,
    default_penalties,
    estimate_sigma_mad,
    mp_median,
    preprocess,
    validate_penalties,
)
from .solver import (
    Decomposition,
    FitReport,
    SolverConfig,
    als_fit,
    compose_signal,
    fit,
    issvt_fit,
    objective_f2,
    unifac_fit,
)

__version__ = "0.1.0"
