"""Monte Carlo solver for second-kind integral equations.

Staged dependent-trials iteration for Fredholm and Volterra equations
with uniform-norm confidence bands; see README.md for usage.
"""

from .deterministic import (
    FunctionOnGrid,
    TauProductFunction,
    apriori_error_bound,
    picard_solve,
    picard_step,
    volterra_solve,
    volterra_step,
    volterra_tail_bound,
)
from .errors import (
    IntegralEquationError,
    InvalidSpecError,
    NonFiniteKernelError,
    UnknownCaseError,
)
from .inference import (
    ConfidenceBand,
    CovarianceEstimate,
    EntropyDiagnostic,
    confidence_band,
    coverage_study,
    entropy_diagnostic,
    estimate_covariance,
    estimate_covariance_volterra,
    gaussian_sup_quantile,
    limit_covariance,
    product_points,
    rate_study,
    tail_log_asymptote,
)
from .mc_fredholm import (
    StageIterate,
    collect_samples,
    depending_trials_integral,
    mc_solve_fredholm,
)
from .mc_volterra import (
    VolterraStageIterate,
    collect_volterra_samples,
    evaluate_volterra_stage,
    mc_solve_volterra,
    volterra_cauchy_demo,
)
from .problems import (
    FredholmProblem,
    ManufacturedCase,
    MeasureSpec,
    MetricSpaceGrid,
    VolterraProblem,
    build_grid,
    gauss_legendre_grid,
    list_cases,
    manufactured_case,
    probe_lipschitz,
    sample_measure,
)
from .sampling import (
    ROLE_ETA,
    ROLE_GAUSS,
    ROLE_PROBE,
    ROLE_XI,
    AsymptoticPartition,
    PartitionSchedule,
    RandomStream,
    allocation_objective,
    asymptotic_partition,
    brute_force_allocation,
    budget_consistent_partition,
    uniform_partition,
    validate_partition,
)

__version__ = "0.1.0"

__all__ = [
    "IntegralEquationError",
    "InvalidSpecError",
    "NonFiniteKernelError",
    "UnknownCaseError",
    "MetricSpaceGrid",
    "MeasureSpec",
    "FredholmProblem",
    "VolterraProblem",
    "ManufacturedCase",
    "build_grid",
    "gauss_legendre_grid",
    "sample_measure",
    "probe_lipschitz",
    "manufactured_case",
    "list_cases",
    "FunctionOnGrid",
    "TauProductFunction",
    "picard_step",
    "picard_solve",
    "apriori_error_bound",
    "volterra_step",
    "volterra_solve",
    "volterra_tail_bound",
    "RandomStream",
    "PartitionSchedule",
    "AsymptoticPartition",
    "uniform_partition",
    "asymptotic_partition",
    "budget_consistent_partition",
    "allocation_objective",
    "brute_force_allocation",
    "validate_partition",
    "ROLE_XI",
    "ROLE_ETA",
    "ROLE_GAUSS",
    "ROLE_PROBE",
    "StageIterate",
    "mc_solve_fredholm",
    "collect_samples",
    "depending_trials_integral",
    "VolterraStageIterate",
    "mc_solve_volterra",
    "evaluate_volterra_stage",
    "collect_volterra_samples",
    "volterra_cauchy_demo",
    "CovarianceEstimate",
    "estimate_covariance",
    "estimate_covariance_volterra",
    "limit_covariance",
    "gaussian_sup_quantile",
    "ConfidenceBand",
    "confidence_band",
    "tail_log_asymptote",
    "EntropyDiagnostic",
    "entropy_diagnostic",
    "product_points",
    "rate_study",
    "coverage_study",
    "__version__",
]
