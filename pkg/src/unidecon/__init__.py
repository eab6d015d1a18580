"""Nonparametric maximum likelihood for uniform deconvolution.

Observations are ``S = U + V`` with ``V`` uniform on ``[0, 1]`` (fixed model)
or on ``[0, E]`` with ``E`` observed (mixed model); the target is the
distribution function ``F0`` of ``U``.
"""

__version__ = "0.1.0"

from .censor import build_support_set, compute_m_n, to_current_status, to_interval_censoring
from .dist import (
    DistributionModel,
    ObservationSet,
    SeedSpec,
    degenerate,
    empirical,
    sample_fixed,
    sample_mixed,
    truncated_exponential,
    uniform,
)
from .errors import (
    AllMassInUnitInterval,
    ConfigurationError,
    DataError,
    DegenerateLikelihoodError,
    DomainError,
    NumericalError,
    UnideconError,
)
from .mle import (
    ICMConfig,
    StepDistribution,
    brute_force_mle,
    cusum_pava_mle,
    fenchel_check,
    icm_solve,
    icm_solve_fixed,
    icm_solve_mixed,
    loglik_fixed,
    loglik_mixed,
)

__all__ = [
    "AllMassInUnitInterval",
    "ConfigurationError",
    "DataError",
    "DegenerateLikelihoodError",
    "DistributionModel",
    "DomainError",
    "ICMConfig",
    "NumericalError",
    "ObservationSet",
    "SeedSpec",
    "StepDistribution",
    "UnideconError",
    "brute_force_mle",
    "build_support_set",
    "compute_m_n",
    "cusum_pava_mle",
    "degenerate",
    "empirical",
    "fenchel_check",
    "icm_solve",
    "icm_solve_fixed",
    "icm_solve_mixed",
    "loglik_fixed",
    "loglik_mixed",
    "sample_fixed",
    "sample_mixed",
    "to_current_status",
    "to_interval_censoring",
    "truncated_exponential",
    "uniform",
]
