"""Semicovariances of Brownian semistationary processes: simulation,
estimation, and verification of the weak law and central limit theorems
for sign-gated power covariations at desk scale.

Layers, bottom-up:

* :mod:`bsscov.kernels` — moving-average kernels and the second-order
  structure (variogram, increment scales, lag correlations) they induce;
* :mod:`bsscov.hermite` — sign-gated power transforms, Hermite expansions,
  and Gaussian moment/covariance quadrature for pairs of transforms;
* :mod:`bsscov.gaussian_sim` — exact circulant-embedding simulation of the
  stationary increment sequences (univariate and cross-correlated pairs);
* :mod:`bsscov.volatility` — deterministic and smooth random volatility
  models with declared Holder regularity;
* :mod:`bsscov.bss` — FFT-convolution assembly of volatility-modulated
  moving-average paths with truncation-error accounting;
* :mod:`bsscov.estimators` — realised (semi)variance, semicovariance, and
  generalised sign-gated power covariation series;
* :mod:`bsscov.asymptotics` — limit-law constants: long-run variances,
  lag-zero moment weights, and the core-statistic covariance;
* :mod:`bsscov.harness` — configuration-driven Monte Carlo experiments
  with oracle-vs-estimate reports;
* :mod:`bsscov.cli` — command-line entry points.
"""

from .kernels import (
    KernelSpec,
    CovarianceModel,
    BivariateKernelSpec,
    BivariateCovarianceModel,
    CrossLagTable,
    kernel_eval,
    variogram,
    limit_lag_correlations,
    write_lag_correlations_csv,
)
from .hermite import (
    Indicator,
    TestFunction,
    HermiteExpansion,
    hermite_poly,
    expansion_coefficients,
    hermite_rank,
    bivariate_expectation,
    covariance_of_transforms,
    truncated_power_moment,
    write_expansion_csv,
    QuadratureDegeneracyError,
    RankUndeterminedError,
    CovarianceNotPSDError,
)
from .gaussian_sim import (
    SimulationScheme,
    GaussianCorePath,
    IncrementSimulator,
    simulate_increments,
    core_path_from_increments,
    stream,
    write_core_path_csv,
    EmbeddingError,
)
from .volatility import (
    ConstantVol,
    SinusoidalVol,
    SmoothFractionalVol,
    sample_volatility,
    integrated_power,
    fbm_covariance,
    write_volatility_csv,
)
from .bss import (
    BssPath,
    BssAssembler,
    simulate_bss,
    TruncationBudgetError,
    derivative_tail_energy,
    write_bss_csv,
)
from .estimators import (
    SemicovSeries,
    realised_semivariance,
    realised_semivariance_downside,
    realised_semicovariance,
    realised_covariance,
    semicovariance_components,
    generalised_covariation,
    clt_statistic,
    write_series_csv,
)
from .asymptotics import (
    UnivariateBeta,
    BivariateBeta,
    LimitLawKind,
    LimitLaw,
    SeriesTailWarning,
    beta_univariate,
    beta_bivariate,
    mu_n,
    cross_base_correlation,
    core_statistic_covariance,
    beta_report_json,
)
from .harness import (
    ExperimentConfig,
    ReportRow,
    MCReport,
    EXPERIMENTS,
    run_experiment,
    run_wlln,
    run_univariate_clt,
    run_bivariate_clt,
    run_generalised_clt,
    run_independence_diagnostic,
    run_assumption_audit,
)

__version__ = "1.0.0"

__all__ = [
    "KernelSpec", "CovarianceModel", "BivariateKernelSpec",
    "BivariateCovarianceModel", "CrossLagTable", "kernel_eval", "variogram",
    "limit_lag_correlations", "write_lag_correlations_csv",
    "Indicator", "TestFunction", "HermiteExpansion", "hermite_poly",
    "expansion_coefficients", "hermite_rank", "bivariate_expectation",
    "covariance_of_transforms", "truncated_power_moment",
    "write_expansion_csv", "QuadratureDegeneracyError",
    "RankUndeterminedError", "CovarianceNotPSDError",
    "SimulationScheme", "GaussianCorePath", "IncrementSimulator",
    "simulate_increments", "core_path_from_increments", "stream",
    "write_core_path_csv", "EmbeddingError",
    "ConstantVol", "SinusoidalVol", "SmoothFractionalVol",
    "sample_volatility", "integrated_power", "fbm_covariance",
    "write_volatility_csv",
    "BssPath", "BssAssembler", "simulate_bss", "TruncationBudgetError",
    "derivative_tail_energy", "write_bss_csv",
    "SemicovSeries", "realised_semivariance",
    "realised_semivariance_downside", "realised_semicovariance",
    "realised_covariance", "semicovariance_components",
    "generalised_covariation", "clt_statistic", "write_series_csv",
    "UnivariateBeta", "BivariateBeta", "LimitLawKind", "LimitLaw",
    "SeriesTailWarning", "beta_univariate", "beta_bivariate", "mu_n",
    "cross_base_correlation", "core_statistic_covariance",
    "beta_report_json",
    "ExperimentConfig", "ReportRow", "MCReport", "EXPERIMENTS",
    "run_experiment", "run_wlln", "run_univariate_clt", "run_bivariate_clt",
    "run_generalised_clt", "run_independence_diagnostic",
    "run_assumption_audit",
    "__version__",
]
