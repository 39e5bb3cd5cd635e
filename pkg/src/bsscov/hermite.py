"""Hermite expansions of power test functions and Gaussian product moments.

The test functions of interest are powers gated by a sign indicator,

    phi(x) = |x|**q * 1{x in side},   q >= 1,

with side one of the full line, [0, inf), or (-inf, 0].  This module expands
such functions in probabilists' Hermite polynomials, determines their Hermite
rank, and evaluates the bivariate and four-variate Gaussian moments that the
limit theory needs.

The integration engine exploits the structure of the integrands instead of
using a single global rule: every expectation is reduced to half-line
integrals of smooth functions (graded Gauss-Legendre panels) and the
innermost Gaussian coordinate is integrated in closed form through
truncated-moment recursions (integer powers) or parabolic-cylinder functions
(real powers).  The sign indicator therefore never crosses a quadrature
panel, which is what makes 1e-10 absolute accuracy attainable.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn, ndtr, pbdv
from scipy.linalg import solve_triangular

from ._quad import gauss_panels, half_line_rule

__all__ = [
    "Indicator",
    "TestFunction",
    "HermiteExpansion",
    "hermite_poly",
    "expansion_coefficients",
    "hermite_rank",
    "bivariate_expectation",
    "covariance_of_transforms",
    "truncated_power_moment",
    "write_expansion_csv",
    "QuadratureDegeneracyError",
    "RankUndeterminedError",
    "CovarianceNotPSDError",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class QuadratureDegeneracyError(RuntimeError):
    """Expansion bookkeeping is inconsistent (insufficient quadrature)."""


class RankUndeterminedError(RuntimeError):
    """No Hermite coefficient clears the detection threshold."""


class CovarianceNotPSDError(ValueError):
    """A covariance matrix input is not positive semidefinite."""


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

class Indicator(str, Enum):
    """Sign gate applied to the power |x|**q."""

    ALL = "all"
    NONNEGATIVE = "nonnegative"
    NONPOSITIVE = "nonpositive"


@dataclass(frozen=True)
class TestFunction:
    """phi(x) = |x|**power * indicator(x), optionally centered at its
    standard-normal mean."""

    __test__ = False  # keep pytest from collecting this API class

    power: float
    indicator: Indicator = Indicator.ALL
    centered: bool = False

    def __post_init__(self) -> None:
        if self.power < 1.0:
            raise ValueError("power must be >= 1")
        object.__setattr__(self, "indicator", Indicator(self.indicator))

    # -- canonical instances ----------------------------------------------

    @staticmethod
    def positive_part() -> "TestFunction":
        """x 1{x >= 0} (the upside gate at unit power)."""
        return TestFunction(1.0, Indicator.NONNEGATIVE)

    @staticmethod
    def negative_part() -> "TestFunction":
        """|x| 1{x <= 0} (magnitude of the downside)."""
        return TestFunction(1.0, Indicator.NONPOSITIVE)

    @staticmethod
    def squared_positive_part() -> "TestFunction":
        """x^2 1{x >= 0} (upside semivariance integrand)."""
        return TestFunction(2.0, Indicator.NONNEGATIVE)

    # -- evaluation ---------------------------------------------------------

    def _magnitude(self, x: np.ndarray) -> np.ndarray:
        if self.power == 1.0:
            return np.abs(x)
        if self.power == 2.0:
            return x * x
        return np.abs(x) ** self.power

    def evaluate(self, x):
        """phi(x), vectorized; ties at 0 belong to both closed half-lines."""
        x = np.asarray(x, dtype=float)
        out = self._magnitude(x)
        if self.indicator is Indicator.NONNEGATIVE:
            out = np.where(x >= 0, out, 0.0)
        elif self.indicator is Indicator.NONPOSITIVE:
            out = np.where(x <= 0, out, 0.0)
        if self.centered:
            out = out - self.gaussian_mean()
        return out if out.ndim else float(out)

    def gaussian_mean(self) -> float:
        """E[|Z|**power * indicator(Z)] for standard normal Z (closed form)."""
        half = 2.0 ** ((self.power - 1.0) / 2.0) * gamma_fn(
            (self.power + 1.0) / 2.0) / _SQRT_2PI
        return 2.0 * half if self.indicator is Indicator.ALL else half

    @property
    def sides(self) -> tuple[int, ...]:
        """Sign(s) of the half-lines the indicator keeps."""
        if self.indicator is Indicator.NONNEGATIVE:
            return (1,)
        if self.indicator is Indicator.NONPOSITIVE:
            return (-1,)
        return (1, -1)

    def uncentered(self) -> "TestFunction":
        return TestFunction(self.power, self.indicator, centered=False)


# ---------------------------------------------------------------------------
# Hermite polynomials and expansions
# ---------------------------------------------------------------------------

def hermite_poly(degree: int, x):
    """Probabilists' Hermite polynomial of the given degree, vectorized.

    Uses H_{p+1}(x) = x H_p(x) - p H_{p-1}(x) with H_0 = 1, H_1 = x.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if degree == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for p in range(1, degree):
        prev, cur = cur, x * cur - p * prev
    return cur if cur.ndim else float(cur)


@dataclass
class HermiteExpansion:
    """Coefficients a_k = E[phi(Z) H_k(Z)] / k! of a test function.

    ``coefficients[k-1]`` holds a_k for k = 1..truncation; the Gaussian mean
    a_0 is stored separately.  ``residual_l2`` is the L2 tail mass
    Var(phi(Z)) - sum_{k<=K} k! a_k^2, and ``variance`` is Var(phi(Z)).
    """

    a0: float
    coefficients: np.ndarray
    truncation: int
    residual_l2: float
    variance: float
    function: TestFunction

    def weighted_square(self, k: int) -> float:
        """k! a_k^2, the variance carried by chaos order k >= 1."""
        return math.factorial(k) * float(self.coefficients[k - 1]) ** 2


@lru_cache(maxsize=8)
def _gaussian_half_rule(nodes_per_panel: int = 12):
    x, w = half_line_rule(nodes_per_panel=nodes_per_panel)
    return x, w * np.exp(-x * x / 2.0) / _SQRT_2PI


def expansion_coefficients(func: TestFunction, truncation: int = 40,
                           nodes_per_panel: int = 12) -> HermiteExpansion:
    """Hermite coefficients a_0..a_K of ``func`` by panel quadrature.

    Raises :class:`QuadratureDegeneracyError` when the Parseval bookkeeping
    comes out inconsistent (negative tail mass beyond tolerance), which
    signals an insufficient rule.
    """
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    x, w = _gaussian_half_rule(nodes_per_panel)
    base = func.uncentered()
    mag = base._magnitude(x)

    # accumulate H_k on the positive nodes once; parity gives the other side
    raw = np.zeros(truncation + 1)
    second_moment = 0.0
    for side in base.sides:
        second_moment += float(np.sum(w * mag * mag))
    prev = np.ones_like(x)
    cur = x.copy()
    for k in range(0, truncation + 1):
        if k == 0:
            hk = prev
        elif k == 1:
            hk = cur
        else:
            prev, cur = cur, x * cur - (k - 1) * prev
            hk = cur
        moment = float(np.sum(w * mag * hk))
        for side in base.sides:
            raw[k] += moment if side > 0 else (-1.0) ** k * moment
        raw[k] /= math.factorial(k)

    a0 = raw[0]
    variance = second_moment - a0 * a0
    coeffs = raw[1:]
    explained = sum(
        math.factorial(k) * coeffs[k - 1] ** 2 for k in range(1, truncation + 1)
    )
    residual = variance - explained
    tol = 1e-8 * max(1.0, variance)
    if residual < -tol:
        raise QuadratureDegeneracyError(
            f"explained variance exceeds total by {-residual:.3e}; "
            "increase the quadrature order"
        )
    if func.centered:
        a0 = 0.0
    return HermiteExpansion(
        a0=a0, coefficients=coeffs, truncation=truncation,
        residual_l2=float(residual), variance=float(variance), function=func,
    )


def hermite_rank(expansion: HermiteExpansion,
                 threshold_factor: float = 1e-12) -> int:
    """Smallest k >= 1 with |a_k| above threshold_factor * max_k |a_k|."""
    mags = np.abs(expansion.coefficients)
    peak = float(mags.max())
    if peak == 0.0:
        raise RankUndeterminedError("all coefficients vanish")
    idx = np.nonzero(mags > threshold_factor * peak)[0]
    if idx.size == 0:
        raise RankUndeterminedError("no coefficient clears the threshold")
    return int(idx[0]) + 1


def write_expansion_csv(path, expansion: HermiteExpansion) -> None:
    """Write (k, a_k, k! a_k^2) rows, including the k = 0 mean row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "coefficient", "weighted_square"])
        writer.writerow([0, repr(float(expansion.a0)),
                         repr(float(expansion.a0) ** 2)])
        for k in range(1, expansion.truncation + 1):
            writer.writerow([
                k,
                repr(float(expansion.coefficients[k - 1])),
                repr(float(expansion.weighted_square(k))),
            ])


# ---------------------------------------------------------------------------
# Truncated Gaussian power moments
# ---------------------------------------------------------------------------

def truncated_power_moment(power: float, c):
    """E[(Z - c)_+ ** power] for standard normal Z, vectorized in ``c``.

    Integer powers use the stable upper-moment recursion
    M_k(c) = c**(k-1) phi(c) + (k-1) M_{k-2}(c); real powers go through the
    parabolic cylinder function D_{-power-1}.
    """
    c = np.asarray(c, dtype=float)
    scalar = c.ndim == 0
    c = np.atleast_1d(c)
    q_int = int(round(power))
    if abs(power - q_int) < 1e-12:
        phi = np.exp(-c * c / 2.0) / _SQRT_2PI
        moments = [ndtr(-c), phi]
        for k in range(2, q_int + 1):
            moments.append(c ** (k - 1) * phi + (k - 1) * moments[k - 2])
        out = np.zeros_like(c)
        for j in range(q_int + 1):
            out += math.comb(q_int, j) * (-c) ** (q_int - j) * moments[j]
    else:
        out = np.empty_like(c)
        far_low = c < -37.0
        far_high = c > 37.0
        mid = ~(far_low | far_high)
        # untruncated moment expansion for c << 0:
        # E[(Z-c)^q] = |c|^q (1 + q(q-1)/(2 c^2) + q..(q-3)*3/(4! c^4) + ...)
        a = np.abs(c[far_low])
        q = power
        out[far_low] = a ** q * (
            1.0
            + q * (q - 1) / (2.0 * a ** 2)
            + q * (q - 1) * (q - 2) * (q - 3) * 3.0 / (24.0 * a ** 4)
        )
        out[far_high] = 0.0
        cm = c[mid]
        d, _ = pbdv(-power - 1.0, cm)
        out[mid] = gamma_fn(power + 1.0) / _SQRT_2PI * np.exp(-cm * cm / 4.0) * d
    return float(out[0]) if scalar else out


def _one_sided_gaussian_moment(power: float, mean, sd):
    """E[(W)_+ ** power] for W ~ N(mean, sd^2), vectorized over ``mean``."""
    if sd <= 0.0:
        mean = np.asarray(mean, dtype=float)
        return np.where(mean > 0, mean ** power, 0.0)
    return sd ** power * truncated_power_moment(power, -np.asarray(mean) / sd)


# ---------------------------------------------------------------------------
# Bivariate expectation
# ---------------------------------------------------------------------------

def bivariate_expectation(f: TestFunction, g: TestFunction, rho: float) -> float:
    """E[f(Z1) g(Z2)] for a standard bivariate normal pair with correlation
    ``rho``; the coupling is Z2 = rho Z1 + sqrt(1-rho^2) Y.

    Centered inputs subtract the product of Gaussian means, i.e. the result
    is the exact expectation of the centered product.
    """
    if not (-1.0 <= rho <= 1.0):
        raise ValueError("rho must lie in [-1, 1]")
    fb, gb = f.uncentered(), g.uncentered()
    x, w = _gaussian_half_rule()
    if abs(rho) == 1.0:
        sign = 1.0 if rho > 0 else -1.0
        raw = 0.0
        for side in fb.sides:
            xs = side * x
            raw += float(np.sum(w * fb.evaluate(xs) * gb.evaluate(sign * xs)))
    else:
        s = math.sqrt(1.0 - rho * rho)
        raw = 0.0
        for side in fb.sides:
            m = rho * (side * x)
            inner = np.zeros_like(x)
            for gside in gb.sides:
                inner += _one_sided_gaussian_moment(gb.power, gside * m, s)
            raw += float(np.sum(w * x ** fb.power * inner))
    if f.centered or g.centered:
        raw -= fb.gaussian_mean() * gb.gaussian_mean()
    return raw


# ---------------------------------------------------------------------------
# Four-variate covariance of transforms
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _orthant_grid(dim: int, graded: bool):
    """Tensor half-line grid (nodes (N, dim), weights (N,)) for one orthant.

    Gaussian-weighted integrands are negligible beyond x ~ 8.5 (mass below
    1e-14), so the panels stop there; the graded variant additionally
    resolves an x**q origin factor with non-integer q.
    """
    if graded:
        x, w = half_line_rule(hi=8.5, first_width=2.0 ** -16,
                              nodes_per_panel=6)
    else:
        x, w = gauss_panels([0.0, 0.5, 1.0, 1.5, 2.5, 4.0, 6.0, 8.5], 8)
    axes = [x] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.ones(nodes.shape[0])
    for wm in wmesh:
        weights *= wm.ravel()
    return nodes, weights


def _orthant_moment(cov: np.ndarray, powers: np.ndarray) -> float:
    """E[prod_i Z_i**q_i 1{Z_i >= 0}] for Z ~ N(0, cov).

    The last coordinate is integrated analytically given the others; the
    outer integral runs over the positive orthant of the remaining
    coordinates with the explicit Gaussian density.
    """
    dim = cov.shape[0]
    if dim == 1:
        return float(truncated_power_moment(powers[0], 0.0))
    outer = cov[:-1, :-1]
    cross = cov[:-1, -1]
    try:
        chol = np.linalg.cholesky(outer)
    except np.linalg.LinAlgError as exc:
        raise CovarianceNotPSDError(
            "outer covariance block is numerically singular"
        ) from exc
    weights_vec = np.linalg.solve(outer, cross)
    cond_var = float(cov[-1, -1] - cross @ weights_vec)
    cond_sd = math.sqrt(max(cond_var, 0.0))

    graded = any(abs(p - round(p)) > 1e-12 for p in powers)
    nodes, weights = _orthant_grid(dim - 1, graded)
    # Gaussian density of the outer block at the grid nodes
    sol = solve_triangular(chol, nodes.T, lower=True)
    quad_form = np.einsum("ij,ij->j", sol, sol)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    dens = np.exp(-0.5 * quad_form - 0.5 * logdet) / (2.0 * np.pi) ** (
        (dim - 1) / 2.0)
    value = weights * dens
    for i in range(dim - 1):
        p = powers[i]
        if p == 1.0:
            value = value * nodes[:, i]
        elif p == 2.0:
            value = value * nodes[:, i] ** 2
        else:
            value = value * nodes[:, i] ** p
    cond_mean = nodes @ weights_vec
    inner = _one_sided_gaussian_moment(powers[-1], cond_mean, cond_sd)
    return float(np.sum(value * inner))


def _merge_duplicates(cov, factors, tol=1e-10):
    """Collapse coordinates correlated by +-1 into single power factors.

    Returns (cov, merged factor list) where each factor is (power, sides)
    with sides a tuple of admissible signs, or None when the merged product
    vanishes identically (opposite one-sided gates).
    """
    items = [
        {"power": tf.power, "sides": set(tf.uncentered().sides)}
        for tf in factors
    ]
    cov = np.array(cov, dtype=float)
    alive = list(range(len(items)))
    changed = True
    while changed:
        changed = False
        for ii in range(len(alive)):
            for jj in range(ii + 1, len(alive)):
                i, j = alive[ii], alive[jj]
                cij = cov[i, j]
                if abs(abs(cij) - 1.0) > tol:
                    continue
                sign = 1.0 if cij > 0 else -1.0
                items[i]["power"] += items[j]["power"]
                jsides = {int(sign * s) for s in items[j]["sides"]}
                items[i]["sides"] &= jsides
                if not items[i]["sides"]:
                    return None, None
                alive.pop(jj)
                changed = True
                break
            if changed:
                break
    idx = np.array(alive)
    return cov[np.ix_(idx, idx)], [items[i] for i in idx]


def covariance_of_transforms(f: TestFunction, g: TestFunction,
                             cov: np.ndarray) -> float:
    """Cov(f(Z1) g(Z2), f(Z3) g(Z4)) for Z ~ N(0, cov) with unit diagonal.

    ``cov`` is the 4x4 correlation matrix of (Z1, Z2, Z3, Z4); the first
    pair feeds f x g and so does the second.  Degenerate matrices with
    +-1 entries are reduced exactly by merging the tied coordinates.
    Raises :class:`CovarianceNotPSDError` for inadmissible inputs.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (4, 4):
        raise ValueError("cov must be 4x4")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise CovarianceNotPSDError("covariance matrix is not symmetric")
    if not np.allclose(np.diag(cov), 1.0, atol=1e-10):
        raise CovarianceNotPSDError("covariance matrix must have unit diagonal")
    eigs = np.linalg.eigvalsh(cov)
    if eigs[0] < -1e-8:
        raise CovarianceNotPSDError(
            f"covariance matrix has eigenvalue {eigs[0]:.3e} < 0"
        )
    mean_first = bivariate_expectation(f.uncentered(), g.uncentered(),
                                       float(np.clip(cov[0, 1], -1, 1)))
    mean_second = bivariate_expectation(f.uncentered(), g.uncentered(),
                                        float(np.clip(cov[2, 3], -1, 1)))
    if np.all(cov[:2, 2:] == 0.0):
        return 0.0  # independent blocks: zero covariance by definition

    reduced_cov, factors = _merge_duplicates(
        cov, [f, g, f, g])
    if reduced_cov is None:
        raw = 0.0
    else:
        raw = 0.0
        side_choices = [sorted(item["sides"]) for item in factors]
        powers = np.array([item["power"] for item in factors])
        for signs in itertools.product(*side_choices):
            s = np.array(signs, dtype=float)
            flipped = reduced_cov * np.outer(s, s)
            raw += _orthant_moment(flipped, powers)
    return raw - mean_first * mean_second
