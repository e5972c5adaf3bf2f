"""Parameterized stochastic leapfrog integration for Hamiltonian systems with
Gaussian-process potentials, plus Monte Carlo convergence-order studies."""

__version__ = "0.1.0"

from .errors import (
    ConditioningError,
    ConfigurationError,
    GpleapError,
    IntegrationOverflowError,
    UnsupportedOperationError,
    UsageError,
)
from .field import (
    ConditionedRealization,
    FieldBatch,
    FieldConfig,
    FourierRealization,
    KernelSpec,
    MeanSpec,
    kernel_cross_derivative,
    sample_realization,
)
from .hamiltonian import (
    MassMatrix,
    PhaseState,
    SystemConfig,
    default_initial_state,
    energy,
    exact_rhs,
)
from .integrators import (
    SchemeParams,
    Trajectory,
    alpha_of,
    beta_of,
    exact_taylor_step,
    integrate,
    leapfrog_param_step,
    leapfrog_standard_step,
    modified_flow_step,
    modified_rhs,
    reference_solve,
)
from .analysis import (
    EnergyDriftReport,
    ErrorSample,
    MomentReport,
    OrderFit,
    StudyResult,
    TailReport,
    derive_seeds,
    energy_drift_study,
    fit_order,
    global_error_study,
    local_truncation,
    modified_matching_study,
    moment_estimate,
    ms_local_error_study,
    tail_probe,
    taylor_remainder_study,
)

__all__ = [
    "__version__",
    "GpleapError", "ConfigurationError", "UsageError", "UnsupportedOperationError",
    "ConditioningError", "IntegrationOverflowError",
    "KernelSpec", "MeanSpec", "FieldConfig", "FourierRealization",
    "ConditionedRealization", "FieldBatch", "sample_realization", "kernel_cross_derivative",
    "MassMatrix", "PhaseState", "SystemConfig", "default_initial_state", "energy", "exact_rhs",
    "SchemeParams", "Trajectory", "alpha_of", "beta_of", "leapfrog_param_step",
    "leapfrog_standard_step", "integrate", "reference_solve", "modified_rhs",
    "modified_flow_step", "exact_taylor_step",
    "ErrorSample", "OrderFit", "StudyResult", "MomentReport", "TailReport",
    "EnergyDriftReport", "derive_seeds", "fit_order", "local_truncation",
    "ms_local_error_study", "modified_matching_study", "taylor_remainder_study",
    "global_error_study", "moment_estimate", "tail_probe", "energy_drift_study",
]
