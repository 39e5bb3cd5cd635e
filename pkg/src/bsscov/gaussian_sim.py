"""Exact simulation of stationary Gaussian increment sequences.

The Gaussian core of the process has stationary increments whose
standardized sequence has autocorrelation ``r_n(k)`` (and cross-correlation
table in the bivariate case) supplied by :mod:`bsscov.kernels`.  Replicates
are drawn exactly in law:

* univariate: circulant embedding of the Toeplitz correlation matrix
  (O(m log m) per path) with an automatic dense-Cholesky fallback when the
  circulant extension has negative eigenvalues;
* bivariate: block-circulant embedding with a per-frequency 2x2 Hermitian
  Cholesky when the extension is nonnegative definite, otherwise dense
  block-Cholesky (exact, reserved for moderate sizes).

Randomness comes from counter-based Philox streams keyed by
``(seed, replicate, component)`` so each replicate is an independent,
reproducible stream regardless of execution order or thread count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import toeplitz

from .kernels import (
    BivariateCovarianceModel,
    BivariateKernelSpec,
    CovarianceModel,
    CrossLagTable,
    KernelSpec,
)

__all__ = [
    "SimulationScheme",
    "GaussianCorePath",
    "IncrementSimulator",
    "simulate_increments",
    "core_path_from_increments",
    "stream",
    "write_core_path_csv",
    "EmbeddingError",
]

DRIVER_COMPONENT = 0
VOLATILITY_COMPONENT = 1

_EIG_TOL = 1e-8


class EmbeddingError(RuntimeError):
    """No exact sampling scheme is available for the requested size."""


class SimulationScheme(str, Enum):
    CIRCULANT_EMBEDDING = "circulant_embedding"
    CHOLESKY_EXACT = "cholesky_exact"


def stream(seed: int, replicate: int, component: int) -> np.random.Generator:
    """Counter-based generator for the (seed, replicate, component) triple."""
    ss = np.random.SeedSequence(entropy=[int(seed), int(replicate),
                                         int(component)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GaussianCorePath:
    """Standardized increment draw of the Gaussian core on a grid.

    ``increments`` has shape (d, m): row j holds the increments of component
    j over ((i-1)/n, i/n], i = 1..m, divided by the increment scale ``tau[j]``
    so each entry has unit variance.
    """

    n: int
    horizon: float
    increments: np.ndarray
    tau: np.ndarray
    seed: int
    replicate: int
    scheme: SimulationScheme
    used_fallback: bool
    min_spectral_eig: float

    @property
    def dimension(self) -> int:
        return self.increments.shape[0]

    @property
    def num_increments(self) -> int:
        return self.increments.shape[1]


# ---------------------------------------------------------------------------
# Scheme builders
# ---------------------------------------------------------------------------

def _circulant_spectrum(corr: np.ndarray) -> tuple[np.ndarray, float]:
    """Eigenvalues of the circulant extension of a correlation sequence.

    ``corr`` holds lags 0..m; the extension has period N = 2m.
    """
    m = corr.size - 1
    row = np.concatenate([corr[:m], [corr[m]], corr[m - 1:0:-1]])
    lam = np.fft.fft(row).real
    return lam, float(lam.min())


def _block_spectrum(table: CrossLagTable, m: int):
    """Per-frequency 2x2 spectral blocks of the block-circulant extension.

    Returns (lam00, lam11, lam01, min_eig): real, real, complex arrays of
    length N = 2m and the smallest eigenvalue across frequencies.
    """
    def wrap(pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
        # pos[k] = r(k), neg[k] = r(-k), both for k = 0..m
        mid = 0.5 * (pos[m] + neg[m])
        return np.concatenate([pos[:m], [mid], neg[m - 1:0:-1]])

    r00 = table.auto[0][: m + 1]
    r11 = table.auto[1][: m + 1]
    k = np.arange(m + 1)
    r01 = table.cross[table.max_lag + k]      # r_{0,1}(k)
    r01_neg = table.cross[table.max_lag - k]  # r_{0,1}(-k)
    lam00 = np.fft.fft(wrap(r00, r00)).real
    lam11 = np.fft.fft(wrap(r11, r11)).real
    # the sampler realizes Cov(X_j^a, X_{j+k}^b) = row_ab(-k mod N), so the
    # cross row must carry the negative lags in its leading half
    lam01 = np.fft.fft(wrap(r01_neg, r01))
    # eigenvalues of [[a, c], [conj(c), b]]: (a+b)/2 +- sqrt(((a-b)/2)^2+|c|^2)
    half_sum = 0.5 * (lam00 + lam11)
    rad = np.sqrt((0.5 * (lam00 - lam11)) ** 2 + np.abs(lam01) ** 2)
    min_eig = float((half_sum - rad).min())
    return lam00, lam11, lam01, min_eig


def _block_cholesky(lam00, lam11, lam01):
    """Lower Cholesky factors of the per-frequency 2x2 Hermitian blocks."""
    a = np.clip(lam00, 0.0, None)
    l00 = np.sqrt(a)
    safe = l00 > 0
    l10 = np.zeros_like(lam01)
    np.divide(np.conj(lam01), l00, out=l10, where=safe)
    l11 = np.sqrt(np.clip(lam11 - np.abs(l10) ** 2, 0.0, None))
    return l00, l10, l11


def _dense_correlation_matrix(table: CrossLagTable, m: int) -> np.ndarray:
    """Interleaved 2m x 2m correlation matrix of the bivariate increments."""
    full = np.empty((2 * m, 2 * m))
    offsets = np.arange(m)[None, :] - np.arange(m)[:, None]  # j - i
    for a in (0, 1):
        for b in (0, 1):
            if a == b:
                vec = np.concatenate([table.auto[a][m - 1:0:-1],
                                      table.auto[a][: m]])
            elif a == 0:
                vec = table.cross[table.max_lag - m + 1:
                                  table.max_lag + m]
            else:
                vec = table.cross[table.max_lag + m - 1:
                                  table.max_lag - m: -1]
            full[a::2, b::2] = vec[offsets + m - 1]
    return full


# ---------------------------------------------------------------------------
# Simulator
# ---------------------------------------------------------------------------

class IncrementSimulator:
    """Reusable exact sampler of standardized increment sequences.

    The spectral (or Cholesky) factorization is computed once at
    construction; each call to :meth:`sample` then costs O(m log m).
    """

    def __init__(self, model, n: int, horizon: float = 1.0,
                 max_cholesky_size: int = 8192):
        if isinstance(model, KernelSpec):
            model = CovarianceModel(model)
        elif isinstance(model, BivariateKernelSpec):
            model = BivariateCovarianceModel(model)
        m = math.ceil(n * horizon)
        if m < 2:
            raise ValueError("need at least 2 increments (n * horizon >= 2)")
        self.n = int(n)
        self.horizon = float(horizon)
        self.m = m
        self.model = model
        self.max_cholesky_size = max_cholesky_size
        if isinstance(model, CovarianceModel):
            self.dimension = 1
            self.tau = np.array([model.increment_scale(n)])
            corr = model.lag_correlations(n, m)
            self._init_univariate(corr)
        elif isinstance(model, BivariateCovarianceModel):
            self.dimension = 2
            self.tau = np.asarray(model.increment_scales(n))
            table = model.cross_lag_correlations(n, m)
            self._init_bivariate(table)
        else:
            raise TypeError(
                "model must be a CovarianceModel, KernelSpec, "
                "BivariateCovarianceModel, or BivariateKernelSpec"
            )

    # -- construction helpers ----------------------------------------------

    @classmethod
    def from_correlations(cls, corr: np.ndarray, n: int = 1,
                          tau: float = 1.0,
                          max_cholesky_size: int = 8192):
        """Build a univariate sampler from an explicit correlation sequence
        (lags 0..m); mainly for validating the fallback machinery."""
        corr = np.asarray(corr, dtype=float)
        if corr.ndim != 1 or corr.size < 3 or corr[0] != 1.0:
            raise ValueError("corr must hold lags 0..m with corr[0] == 1")
        self = cls.__new__(cls)
        self.n = int(n)
        self.m = corr.size - 1
        self.horizon = self.m / self.n
        self.model = None
        self.dimension = 1
        self.tau = np.array([float(tau)])
        self.max_cholesky_size = max_cholesky_size
        self._init_univariate(corr)
        return self

    def _init_univariate(self, corr: np.ndarray) -> None:
        lam, min_eig = _circulant_spectrum(corr)
        self.min_spectral_eig = min_eig
        scale = float(lam.max())
        if min_eig >= -_EIG_TOL * scale:
            self.scheme = SimulationScheme.CIRCULANT_EMBEDDING
            self.used_fallback = False
            self._sqrt_lam = np.sqrt(np.clip(lam, 0.0, None))
        else:
            self._require_cholesky_budget()
            sigma = toeplitz(corr[: self.m])
            self.scheme = SimulationScheme.CHOLESKY_EXACT
            self.used_fallback = True
            self._chol = self._psd_cholesky(sigma)

    def _init_bivariate(self, table: CrossLagTable) -> None:
        lam00, lam11, lam01, min_eig = _block_spectrum(table, self.m)
        self.min_spectral_eig = min_eig
        scale = float(max(lam00.max(), lam11.max()))
        if min_eig >= -_EIG_TOL * scale:
            self.scheme = SimulationScheme.CIRCULANT_EMBEDDING
            self.used_fallback = False
            self._l00, self._l10, self._l11 = _block_cholesky(
                lam00, lam11, lam01)
        else:
            self._require_cholesky_budget()
            sigma = _dense_correlation_matrix(table, self.m)
            self.scheme = SimulationScheme.CHOLESKY_EXACT
            self.used_fallback = True
            self._chol = self._psd_cholesky(sigma)

    def _require_cholesky_budget(self) -> None:
        if self.m > self.max_cholesky_size:
            raise EmbeddingError(
                f"circulant embedding failed and m={self.m} exceeds the "
                f"dense Cholesky budget ({self.max_cholesky_size})"
            )

    @staticmethod
    def _psd_cholesky(sigma: np.ndarray) -> np.ndarray:
        try:
            return np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            # allow a tiny negative eigenvalue from roundoff, nothing more
            eigs, vecs = np.linalg.eigh(sigma)
            if eigs[0] < -1e-10 * max(eigs[-1], 1.0):
                raise EmbeddingError(
                    f"target covariance is not PSD (min eig {eigs[0]:.3e})"
                ) from None
            return vecs * np.sqrt(np.clip(eigs, 0.0, None))

    # -- sampling ------------------------------------------------------------

    def _draw(self, rng: np.random.Generator) -> np.ndarray:
        """One standardized increment array of shape (d, m)."""
        m = self.m
        if self.scheme is SimulationScheme.CHOLESKY_EXACT:
            z = rng.standard_normal(self.dimension * m)
            x = self._chol @ z
            if self.dimension == 1:
                return x[None, :]
            return x.reshape(m, 2).T.copy()
        big_n = 2 * m
        if self.dimension == 1:
            e = rng.standard_normal(big_n) + 1j * rng.standard_normal(big_n)
            y = np.fft.ifft(self._sqrt_lam * e) * math.sqrt(big_n)
            return y.real[None, :m].copy()
        e0 = rng.standard_normal(big_n) + 1j * rng.standard_normal(big_n)
        e1 = rng.standard_normal(big_n) + 1j * rng.standard_normal(big_n)
        w0 = self._l00 * e0
        w1 = self._l10 * e0 + self._l11 * e1
        y = np.fft.ifft(np.stack([w0, w1]), axis=1) * math.sqrt(big_n)
        return np.ascontiguousarray(y.real[:, :m])

    def sample(self, seed: int, replicate: int = 0) -> GaussianCorePath:
        rng = stream(seed, replicate, DRIVER_COMPONENT)
        return GaussianCorePath(
            n=self.n, horizon=self.horizon, increments=self._draw(rng),
            tau=self.tau.copy(), seed=int(seed), replicate=int(replicate),
            scheme=self.scheme, used_fallback=self.used_fallback,
            min_spectral_eig=self.min_spectral_eig,
        )

    def sample_batch(self, seed: int, replicates) -> np.ndarray:
        """Standardized increments for many replicates, shape (R, d, m).

        Each replicate uses its own (seed, replicate) stream, so the result
        is bit-identical to stacking individual :meth:`sample` calls.
        """
        replicates = list(replicates)
        out = np.empty((len(replicates), self.dimension, self.m))
        for i, rep in enumerate(replicates):
            rng = stream(seed, rep, DRIVER_COMPONENT)
            out[i] = self._draw(rng)
        return out


def simulate_increments(model, n: int, horizon: float, seed: int,
                        replicate: int = 0) -> GaussianCorePath:
    """One exact draw of the standardized increment sequence."""
    return IncrementSimulator(model, n, horizon).sample(seed, replicate)


def core_path_from_increments(path: GaussianCorePath) -> np.ndarray:
    """Grid values G_{i/n} - G_0 (shape (d, m)) from standardized increments.

    Entry (j, i-1) equals tau_j * sum of the first i standardized increments,
    the partial-sum reconstruction of the core path on the grid.
    """
    return path.tau[:, None] * np.cumsum(path.increments, axis=1)


def write_core_path_csv(path: GaussianCorePath, file) -> None:
    """CSV rows (i, t = i/n, x1[, x2]) of the standardized increments."""
    header = ["i", "t", "x1"] + (["x2"] if path.dimension == 2 else [])
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="") if own else file
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(path.num_increments):
            row = [i + 1, repr((i + 1) / path.n)]
            row += [repr(float(v)) for v in path.increments[:, i]]
            writer.writerow(row)
    finally:
        if own:
            fh.close()
