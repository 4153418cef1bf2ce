"""Monte Carlo laboratory for a Brownian polymer in a spatially correlated
Gaussian random environment: covariance kernels with spectral samplers, exact
and random-feature environment samplers, replica path ensembles with
partition, martingale, overlap, and fractional-moment estimators, closed-form
bound evaluators, and reproducible multi-environment experiment campaigns."""

from .environment import (
    MODE_EXACT,
    MODE_SPECTRAL,
    EnvironmentRealization,
    increments_at,
    make_environment,
    spectral_covariance_error,
)
from .experiments import ExperimentConfig, SummaryRecord
from .kernels import (
    CovarianceKernel,
    cauchy_kernel,
    eval_kernel,
    gaussian_kernel,
    radial_tail_integral,
    sample_frequency,
    user_radial_kernel,
)
from .polymer import (
    PathEnsemble,
    PolymerRun,
    accumulate_hamiltonian,
    fractional_moment,
    gibbs_pair_average,
    log_partition_series,
    normalized_partition,
    overlap_estimate,
    partition_estimate,
    sample_paths,
)
from .theory import (
    DisorderCriterionSpec,
    annealed_mean,
    annealed_second_moment,
    concentration_bound,
    disorder_criterion_h1,
    fractional_moment_bound,
    free_energy_upper_bound,
    hypothesis_h_probe,
    kappa,
    pair_exit_probability,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceKernel",
    "DisorderCriterionSpec",
    "EnvironmentRealization",
    "ExperimentConfig",
    "MODE_EXACT",
    "MODE_SPECTRAL",
    "PathEnsemble",
    "PolymerRun",
    "SummaryRecord",
    "accumulate_hamiltonian",
    "annealed_mean",
    "annealed_second_moment",
    "cauchy_kernel",
    "concentration_bound",
    "disorder_criterion_h1",
    "eval_kernel",
    "fractional_moment",
    "fractional_moment_bound",
    "free_energy_upper_bound",
    "gaussian_kernel",
    "gibbs_pair_average",
    "hypothesis_h_probe",
    "increments_at",
    "kappa",
    "log_partition_series",
    "make_environment",
    "normalized_partition",
    "overlap_estimate",
    "pair_exit_probability",
    "partition_estimate",
    "radial_tail_integral",
    "sample_frequency",
    "sample_paths",
    "spectral_covariance_error",
    "user_radial_kernel",
]
