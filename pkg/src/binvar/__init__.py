"""Bayesian sparse VAR(1) for seasonally binned multivariate count series.

The pipeline runs in stages, each importable on its own:

- ``data_io``: weekly CSV tables with explicit missingness.
- ``phase_binning``: seasonal-phase clustering of count series into bins.
- ``circulant_linalg``: the circulant tridiagonal error precision.
- ``shrinkage``: regularised-horseshoe machinery and its prior simulator.
- ``model_posterior``: the joint log posterior with exact gradients.
- ``hmc_sampler``: Hamiltonian Monte Carlo engine and convergence checks.
- ``synthgen``: ground-truth simulators for recovery studies.
- ``analysis``: selection, audits, screening, and report assembly.
- ``cli``: the ``binvar`` command line front door.
"""

from .analysis import (
    FitReport,
    FitResult,
    build_report,
    equal_tailed_interval,
    fit_model,
    residual_means,
    screen_covariates,
    select_nonzero,
    sign_probabilities,
    spectral_radius_audit,
)
from .circulant_linalg import CirculantPrecision
from .data_io import (
    CovariateSpec,
    SeriesTable,
    load_counts,
    load_covariates,
    load_taxonomy,
    transform_covariates,
    write_counts,
    write_table,
)
from .hmc_sampler import (
    PosteriorDraws,
    SamplerConfig,
    diagnostics,
    rank_ess,
    run_chains,
    split_rhat,
)
from .model_posterior import ModelConfig, ParamState, Posterior
from .phase_binning import BinnedSeries, PhaseProfile, cluster
from .shrinkage import (
    HorseshoeConfig,
    simulate_shrinkage_prior,
    tau0_from_sparsity,
)
from .synthgen import TruthSpec, simulate_glv, simulate_var

__version__ = "0.1.0"

__all__ = [
    "BinnedSeries",
    "CirculantPrecision",
    "CovariateSpec",
    "FitReport",
    "FitResult",
    "HorseshoeConfig",
    "ModelConfig",
    "ParamState",
    "PhaseProfile",
    "Posterior",
    "PosteriorDraws",
    "SamplerConfig",
    "SeriesTable",
    "TruthSpec",
    "build_report",
    "cluster",
    "diagnostics",
    "equal_tailed_interval",
    "fit_model",
    "load_counts",
    "load_covariates",
    "load_taxonomy",
    "rank_ess",
    "residual_means",
    "run_chains",
    "screen_covariates",
    "select_nonzero",
    "sign_probabilities",
    "simulate_glv",
    "simulate_shrinkage_prior",
    "simulate_var",
    "spectral_radius_audit",
    "split_rhat",
    "tau0_from_sparsity",
    "transform_covariates",
    "write_counts",
    "write_table",
    "__version__",
]
