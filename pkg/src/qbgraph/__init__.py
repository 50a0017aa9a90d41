"""Quasi-Bayesian graph estimation by parallel spike-and-slab column regressions.

The package estimates a sparse precision matrix from Gaussian data by
running one spike-and-slab regression MCMC per column (each column
regressed on all others), then symmetrizing the per-column inclusion
frequencies and posterior means into a graph estimate with entrywise
credible intervals.

Typical flow::

    theta = generate(GeneratorSpec(kind="setting_c", p=100, seed=1))
    data = sample_gaussian(theta, n=250, seed=2)
    sigma2 = resolve_sigma2(data, SigmaSpec(mode="known", known_values=1.0 / np.diag(theta.entries)))
    hyper = resolve_hyperparameters(data, sigma2)
    fit = fit_all(data, hyper, ChainConfig(seed=3), workers=8)
    estimate = build_graph_estimate(fit)

The ``qbgraph`` console script drives the same pipeline from the shell.
"""

from .aggregate import (
    GraphEstimate,
    build_graph_estimate,
    credible_intervals,
    disjoint_interval_pairs,
    point_estimate,
    symmetrize_structure,
)
from .diagnostics import (
    BudgetExceededError,
    DegenerateTraceError,
    Metrics,
    TheoryReport,
    geweke_z,
    metrics,
    restricted_eigen,
    sparse_eigen_bounds,
    theory_quantities,
)
from .model import (
    ColumnState,
    DataMatrix,
    Hyperparameters,
    PrecisionMatrix,
    elastic_net_log_normalizer,
    log_prior_col,
    log_quasi_likelihood_col,
    log_target_col,
    resolve_hyperparameters,
)
from .oracle import OracleGrid, OracleResult, exact_marginals_small, log_model_weight
from .orchestrator import ColumnFitError, FitResult, column_seed, derive_seed, fit_all
from .samplers import (
    ChainConfig,
    ChainSummary,
    initial_state,
    l1_envelope,
    run_chain,
    smoothed_log_normalizer,
    soft_threshold,
)
from .sigma import DegenerateFitError, SigmaSpec, estimate_sigma2_cv, lasso_cd, resolve_sigma2
from .simulate import GeneratorSpec, gen_hub, gen_setting_c, generate, sample_gaussian

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ChainConfig",
    "ChainSummary",
    "ColumnFitError",
    "ColumnState",
    "DataMatrix",
    "DegenerateFitError",
    "DegenerateTraceError",
    "FitResult",
    "GeneratorSpec",
    "GraphEstimate",
    "Hyperparameters",
    "Metrics",
    "OracleGrid",
    "OracleResult",
    "PrecisionMatrix",
    "SigmaSpec",
    "TheoryReport",
    "build_graph_estimate",
    "column_seed",
    "credible_intervals",
    "derive_seed",
    "disjoint_interval_pairs",
    "elastic_net_log_normalizer",
    "estimate_sigma2_cv",
    "exact_marginals_small",
    "fit_all",
    "gen_hub",
    "gen_setting_c",
    "generate",
    "geweke_z",
    "initial_state",
    "l1_envelope",
    "lasso_cd",
    "log_model_weight",
    "log_prior_col",
    "log_quasi_likelihood_col",
    "log_target_col",
    "metrics",
    "point_estimate",
    "resolve_hyperparameters",
    "resolve_sigma2",
    "restricted_eigen",
    "run_chain",
    "sample_gaussian",
    "smoothed_log_normalizer",
    "soft_threshold",
    "sparse_eigen_bounds",
    "symmetrize_structure",
    "theory_quantities",
    "__version__",
]
