"""Limit-law constants: long-run variances, centering rates, and
decorrelation covariances.

The scaled statistic sqrt(n) (V_t - centering(t)) converges to sqrt(beta)
times a Brownian motion (times an integrated-volatility functional when
volatility is stochastic).  This module evaluates

* the univariate long-run variance
  beta = sum_k k! a_k^2 (1 + 2 sum_i rho(i)^k) from a Hermite expansion and
  the limiting lag correlations rho_alpha;
* the bivariate long-run variance as the lag sum of
  Cov(h(X_0), h(X_k)) for h = f (x) g, evaluated by Gaussian quadrature at a
  reference sampling frequency;
* the n-dependent centering rate mu_n = E[p(X^1) p(X^2)] at the lag-0
  cross-correlation;
* the covariance between the core increment G_1 - G_0 and the statistic,
  whose decay to zero is the observable content of the asymptotic
  independence of the limit.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .hermite import (
    HermiteExpansion,
    TestFunction,
    bivariate_expectation,
    covariance_of_transforms,
)
from .kernels import (
    BivariateCovarianceModel,
    BivariateKernelSpec,
    CovarianceModel,
    limit_lag_correlations,
)

__all__ = [
    "UnivariateBeta",
    "BivariateBeta",
    "LimitLawKind",
    "LimitLaw",
    "SeriesTailWarning",
    "beta_univariate",
    "beta_bivariate",
    "mu_n",
    "cross_base_correlation",
    "core_statistic_covariance",
    "beta_report_json",
]


class SeriesTailWarning(UserWarning):
    """A truncated series' estimated tail is not comfortably negligible."""


@dataclass(frozen=True)
class UnivariateBeta:
    """Doubly truncated long-run variance with its inner-sum tail bound."""

    value: float
    tail_bound: float
    addends: np.ndarray  # contribution of each chaos order k = 1..K
    truncation: int
    lag_count: int

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class BivariateBeta:
    """Truncated lag sum of Cov(h(X_0), h(X_k)) with a tail estimate."""

    value: float
    tail_estimate: float
    lag_zero_variance: float
    lag_covariances: np.ndarray  # k = 1..J
    lag_count: int
    n_ref: int

    def __float__(self) -> float:
        return self.value


class LimitLawKind(str, Enum):
    SCALED_BM = "scaled_brownian_motion"
    VOLATILITY_MODULATED = "volatility_modulated"


@dataclass(frozen=True)
class LimitLaw:
    """Descriptor of the limiting process of the scaled statistic."""

    kind: LimitLawKind
    beta: float
    drift_rate: float | None = None
    sigma_functional: str = "1"

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    def normal_marginal(self, t: float) -> tuple[float, float]:
        """(mean, variance) of the time-t marginal when it is an explicit
        normal (scaled Brownian motion)."""
        if self.kind is not LimitLawKind.SCALED_BM:
            raise ValueError("marginal is mixed normal, not explicit")
        return 0.0, self.beta * t


# ---------------------------------------------------------------------------
# Univariate beta
# ---------------------------------------------------------------------------

def beta_univariate(expansion: HermiteExpansion, alpha: float,
                    truncation: int | None = None, lag_count: int = 10 ** 6,
                    correlations: np.ndarray | None = None,
                    tail_tol: float = 1e-3) -> UnivariateBeta:
    """Long-run variance sum_k k! a_k^2 (1 + 2 sum_{i<=J} rho(i)^k).

    By default the limiting lag correlations rho_alpha are used with the
    rank-1 inner sum evaluated by its exact telescoped form; pass an
    explicit ``correlations`` array (values at lags 0..J) to evaluate the
    same series with finite-n correlations instead.  A
    :class:`SeriesTailWarning` is raised when the integral bound on the
    neglected inner-sum tail exceeds ``tail_tol`` of the result.
    """
    if not -0.5 < alpha < 0.5 or alpha == 0.0:
        raise ValueError("alpha must lie in (-1/2, 1/2) excluding 0")
    if truncation is None:
        truncation = expansion.truncation
    if truncation > expansion.truncation:
        raise ValueError("truncation exceeds the expansion order")
    c = 2.0 * alpha + 1.0

    if correlations is None:
        lags = np.arange(1, lag_count + 1, dtype=float)
        rho = limit_lag_correlations(alpha, lags)
        # exact telescoped rank-1 inner sum: 1 + 2 sum_i rho(i)
        s1_full = (lag_count + 1.0) ** c - lag_count ** c
    else:
        correlations = np.asarray(correlations, dtype=float)
        rho = correlations[1:]
        lag_count = rho.size
        s1_full = 1.0 + 2.0 * float(np.sum(rho))

    addends = np.zeros(truncation)
    tail_bound = 0.0
    # |rho(i)| ~ |alpha (2 alpha + 1)| i^{2 alpha - 1} bounds the inner tails
    decay_const = abs(alpha * (2.0 * alpha + 1.0)) + 1e-300
    power = rho.copy()
    for k in range(1, truncation + 1):
        if k == 1:
            inner = s1_full
        else:
            power = power * rho if k > 2 else rho * rho
            inner = 1.0 + 2.0 * float(np.sum(power))
        weight = expansion.weighted_square(k)
        addends[k - 1] = weight * inner
        exponent = k * (1.0 - 2.0 * alpha) - 1.0
        if weight > 0.0:
            if exponent <= 0.0:
                warnings.warn(
                    f"inner sum at chaos order {k} has a non-summable tail "
                    f"bound (exponent {exponent:.3f} <= 0); beta may diverge",
                    SeriesTailWarning, stacklevel=2,
                )
            else:
                tail_bound += (weight * 2.0 * decay_const ** k
                               * lag_count ** (-exponent) / exponent)
    value = float(np.sum(addends))
    if value > 0 and tail_bound > tail_tol * value:
        warnings.warn(
            f"inner-sum tail bound {tail_bound:.3e} exceeds {tail_tol:.1e} "
            "of beta; increase lag_count",
            SeriesTailWarning, stacklevel=2,
        )
    return UnivariateBeta(value=value, tail_bound=float(tail_bound),
                          addends=addends, truncation=truncation,
                          lag_count=lag_count)


# ---------------------------------------------------------------------------
# Bivariate beta
# ---------------------------------------------------------------------------

def _lag_cov_matrix(table, k: int) -> np.ndarray:
    """4x4 correlation matrix of (X_0^1, X_0^2, X_k^1, X_k^2)."""
    r0 = table.base_correlation
    r11 = table.correlation(0, 0, k)
    r22 = table.correlation(1, 1, k)
    r12 = table.correlation(0, 1, k)
    r21 = table.correlation(1, 0, k)
    return np.array([
        [1.0, r0, r11, r12],
        [r0, 1.0, r21, r22],
        [r11, r21, 1.0, r0],
        [r12, r22, r0, 1.0],
    ])


def beta_bivariate(spec: BivariateKernelSpec,
                   func1: TestFunction | None = None,
                   func2: TestFunction | None = None,
                   lag_count: int = 2048, n_ref: int = 4096,
                   iid_mode: bool = False,
                   tail_tol: float = 0.01) -> BivariateBeta:
    """Long-run variance of h(X_k) = func1(X_k^1) func2(X_k^2) by lag sum.

    Evaluated as Var(h) + 2 sum_{k=1..J} Cov(h(X_0), h(X_k)) with the lag
    correlations taken at the reference frequency ``n_ref``; the lag-J tail
    is estimated from the terminal decay rate and a
    :class:`SeriesTailWarning` is raised when it exceeds ``tail_tol`` of the
    partial sum.  ``iid_mode`` zeroes all correlations (within-pair and
    across lags) as a calibration check, making beta the plain variance of
    f(Z1) g(Z2) for independent standard normals.
    """
    p = TestFunction.positive_part()
    func1 = p if func1 is None else func1
    func2 = func1 if func2 is None else func2
    if func1.centered or func2.centered:
        raise ValueError("long-run variance expects uncentered test "
                         "functions (centering happens at the statistic)")

    def pair_variance(r0: float) -> float:
        sq1 = TestFunction(2.0 * func1.power, func1.indicator)
        sq2 = TestFunction(2.0 * func2.power, func2.indicator)
        second = bivariate_expectation(sq1, sq2, r0)
        mean = bivariate_expectation(func1, func2, r0)
        return second - mean * mean

    if iid_mode:
        var0 = pair_variance(0.0)
        return BivariateBeta(value=var0, tail_estimate=0.0,
                             lag_zero_variance=var0,
                             lag_covariances=np.zeros(0),
                             lag_count=0, n_ref=n_ref)

    model = BivariateCovarianceModel(spec)
    table = model.cross_lag_correlations(n_ref, lag_count + 1)
    var0 = pair_variance(table.base_correlation)
    covs = np.empty(lag_count)
    for k in range(1, lag_count + 1):
        covs[k - 1] = covariance_of_transforms(
            func1, func2, _lag_cov_matrix(table, k))
    value = var0 + 2.0 * float(np.sum(covs))

    # tail estimate from the terminal power-law decay rate
    tail = 0.0
    hi, lo = abs(covs[-1]), abs(covs[lag_count // 2 - 1])
    if hi > 0.0 and lo > hi:
        kappa = math.log(lo / hi) / math.log(2.0)
        if kappa > 1.0:
            tail = 2.0 * hi * lag_count / (kappa - 1.0)
    if value != 0.0 and tail > tail_tol * abs(value):
        warnings.warn(
            f"lag-tail estimate {tail:.3e} exceeds {tail_tol:.1%} of the "
            "partial sum; increase lag_count",
            SeriesTailWarning, stacklevel=2,
        )
    return BivariateBeta(value=float(value), tail_estimate=float(tail),
                         lag_zero_variance=float(var0), lag_covariances=covs,
                         lag_count=lag_count, n_ref=n_ref)


# ---------------------------------------------------------------------------
# Centering and decorrelation constants
# ---------------------------------------------------------------------------

def cross_base_correlation(spec: BivariateKernelSpec, n: int) -> float:
    """Lag-0 correlation of the rescaled increment pair at frequency n."""
    model = BivariateCovarianceModel(spec)
    return model.cross_lag_correlations(n, 1).base_correlation


def mu_n(spec: BivariateKernelSpec, n: int,
         func1: TestFunction | None = None,
         func2: TestFunction | None = None) -> float:
    """Centering rate E[func1(X^1) func2(X^2)] at the lag-0 correlation.

    The n-dependence is kept exact: the statistic's centering is written
    with mu_n at the observation frequency, not with its limit.
    """
    p = TestFunction.positive_part()
    func1 = p if func1 is None else func1
    func2 = func1 if func2 is None else func2
    return bivariate_expectation(func1, func2, cross_base_correlation(spec, n))


def core_statistic_covariance(model: CovarianceModel, n: int,
                              rank_one_coefficient: float | None = None
                              ) -> float:
    """Covariance a_1 R(1) / sqrt(n R(1/n)) between G_1 - G_0 and the t=1
    statistic of the upside-square transform.

    Decreases to zero like n^alpha (up to slowly varying factors), which is
    the numerical content of the asymptotic independence of the limit from
    the core path.  ``rank_one_coefficient`` defaults to sqrt(2/pi), the
    rank-1 Hermite coefficient of x^2 1{x >= 0}.
    """
    a1 = (math.sqrt(2.0 / math.pi) if rank_one_coefficient is None
          else rank_one_coefficient)
    r1 = model.variogram(1.0)
    tau_sq = model.variogram(1.0 / n)
    return a1 * r1 / math.sqrt(n * tau_sq)


def beta_report_json(result, spec=None, alpha: float | None = None) -> str:
    """Machine-readable report of a beta computation."""
    doc: dict = {"beta": result.value}
    if isinstance(result, UnivariateBeta):
        doc.update({
            "kind": "univariate",
            "tail_bound": result.tail_bound,
            "K": result.truncation,
            "J": result.lag_count,
        })
        if alpha is not None:
            doc["alpha"] = alpha
    else:
        doc.update({
            "kind": "bivariate",
            "tail_estimate": result.tail_estimate,
            "J": result.lag_count,
            "n_ref": result.n_ref,
        })
        if spec is not None:
            doc["alphas"] = [k.alpha for k in spec.kernels]
            doc["rho"] = spec.rho
    return json.dumps(doc, indent=2, sort_keys=True)
