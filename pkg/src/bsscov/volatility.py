"""Volatility path generators with declared Hölder regularity.

Three model families cover the regimes the limit theory distinguishes:

* :class:`ConstantVol` — deterministic level (the fully pinned-down case);
* :class:`SinusoidalVol` — smooth deterministic modulation, Lipschitz paths;
* :class:`SmoothFractionalVol` — ``base * exp(scale * B^H_t)`` driven by an
  exactly simulated fractional Brownian motion with Hurst index H > 1/2, so
  paths are positive without clipping and Hölder continuous of any order
  below H.

Stochastic volatility draws use the dedicated volatility component of the
``(seed, replicate, component)`` stream family, independent of the Gaussian
core's driver stream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .gaussian_sim import VOLATILITY_COMPONENT, stream

__all__ = [
    "ConstantVol",
    "SinusoidalVol",
    "SmoothFractionalVol",
    "sample_volatility",
    "integrated_power",
    "fbm_covariance",
    "write_volatility_csv",
]

_MAX_FBM_GRID = 4096


@dataclass(frozen=True)
class ConstantVol:
    """sigma_t = level."""

    level: float = 1.0

    def __post_init__(self) -> None:
        if self.level <= 0:
            raise ValueError("level must be positive")

    # Hölder exponent of the paths (constants are smooth); plain class
    # attributes, not dataclass fields
    holder_exponent = 1.0
    is_random = False

    def values(self, times: np.ndarray, rng=None) -> np.ndarray:
        return np.full(np.shape(times), self.level, dtype=float)


@dataclass(frozen=True)
class SinusoidalVol:
    """sigma_t = base + amplitude * sin(angular_frequency * t).

    Positivity requires |amplitude| < base; paths are Lipschitz.
    """

    base: float = 1.0
    amplitude: float = 0.5
    angular_frequency: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        if self.base <= 0:
            raise ValueError("base must be positive")
        if abs(self.amplitude) >= self.base:
            raise ValueError("|amplitude| must be < base for positivity")

    holder_exponent = 1.0
    is_random = False

    def values(self, times: np.ndarray, rng=None) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        return self.base + self.amplitude * np.sin(self.angular_frequency * t)

    def integral_of_square(self, t: float) -> float:
        """Closed form of integral_0^t sigma_s^2 ds."""
        b, a, w = self.base, self.amplitude, self.angular_frequency
        out = b * b * t
        out += 2 * b * a * (1.0 - math.cos(w * t)) / w
        out += a * a * (t / 2.0 - math.sin(2.0 * w * t) / (4.0 * w))
        return out


def fbm_covariance(times: np.ndarray, hurst: float) -> np.ndarray:
    """Covariance 0.5 (s^{2H} + t^{2H} - |t-s|^{2H}) of fractional Brownian
    motion at the given times."""
    t = np.asarray(times, dtype=float)
    s, u = np.meshgrid(t, t, indexing="ij")
    h2 = 2.0 * hurst
    return 0.5 * (s ** h2 + u ** h2 - np.abs(s - u) ** h2)


@lru_cache(maxsize=8)
def _fbm_factor(dt: float, m: int, hurst: float) -> np.ndarray:
    """Cholesky factor of the fBm covariance at times dt, 2 dt, .., m dt."""
    times = np.arange(1, m + 1) * dt
    cov = fbm_covariance(times, hurst)
    # the grid covariance is positive definite for H in (0, 1); jitter only
    # absorbs roundoff at larger sizes
    jitter = 1e-12 * np.trace(cov) / m
    return np.linalg.cholesky(cov + jitter * np.eye(m))


@dataclass(frozen=True)
class SmoothFractionalVol:
    """sigma_t = base * exp(scale * B^H_t) with Hurst index H in (1/2, 1).

    The exponential form keeps paths strictly positive without clipping;
    paths inherit every Hölder exponent below H.
    """

    base: float = 1.0
    scale: float = 0.3
    hurst: float = 0.75

    def __post_init__(self) -> None:
        if self.base <= 0:
            raise ValueError("base must be positive")
        if not 0.5 < self.hurst < 1.0:
            raise ValueError("hurst must lie in (1/2, 1)")

    is_random = True

    @property
    def holder_exponent(self) -> float:
        return self.hurst

    def values(self, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
            raise ValueError("times must be a uniform grid starting at 0")
        steps = np.diff(t)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("times must be uniformly spaced")
        m = t.size - 1
        if m > _MAX_FBM_GRID:
            raise ValueError(
                f"fractional volatility grid limited to {_MAX_FBM_GRID} steps "
                "(dense Cholesky)"
            )
        if rng is None:
            raise ValueError("SmoothFractionalVol requires an RNG")
        chol = _fbm_factor(float(steps[0]), m, self.hurst)
        bh = np.concatenate([[0.0], chol @ rng.standard_normal(m)])
        return self.base * np.exp(self.scale * bh)


def sample_volatility(spec, n: int, horizon: float, seed: int,
                      replicate: int = 0) -> np.ndarray:
    """Volatility values at grid points i/n, i = 0..ceil(n*horizon).

    Deterministic models ignore the seed; stochastic models draw from the
    volatility component of the (seed, replicate) stream family.
    """
    m = math.ceil(n * horizon)
    if m < 1:
        raise ValueError("need n * horizon >= 1")
    times = np.arange(m + 1) / n
    rng = (stream(seed, replicate, VOLATILITY_COMPONENT)
           if spec.is_random else None)
    sigma = spec.values(times, rng)
    if np.any(sigma < 0):
        raise ValueError("volatility model produced negative values")
    return sigma


def integrated_power(sigma: np.ndarray, power: float, t: float,
                     n: int) -> float:
    """Left-endpoint Riemann sum (1/n) sum_{i<=floor(nt)} sigma_{(i-1)/n}^q.

    Matches the left-endpoint convention of the statistics: the i-th
    increment is weighted by the volatility at the left edge of its cell.
    """
    sigma = np.asarray(sigma, dtype=float)
    count = math.floor(n * t + 1e-9)
    if count > sigma.size - 1:
        raise ValueError("t exceeds the sampled horizon")
    if count <= 0:
        return 0.0
    block = sigma[:count]
    if power == 1.0:
        vals = block
    elif power == 2.0:
        vals = block * block
    else:
        vals = block ** power
    return float(np.sum(vals)) / n


def write_volatility_csv(path, sigma: np.ndarray, n: int) -> None:
    """CSV rows (i, t = i/n, sigma)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "t", "sigma"])
        for i, v in enumerate(np.asarray(sigma, dtype=float)):
            writer.writerow([i, repr(i / n), repr(float(v))])
