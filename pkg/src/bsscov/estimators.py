"""Realised semivariance, semicovariance, and generalised covariation.

All statistics are running series over the observation grid,

    V_t = (1/n) * sum_{i <= floor(nt)} phi(x_i) psi(y_i),

where x_i, y_i are increments rescaled by their increment scales (scaled
mode, the form every limit theorem is stated for) or raw increments
(unscaled mode).  The univariate statistics are the diagonal case psi = 1 or
y = x.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .hermite import Indicator, TestFunction

__all__ = [
    "SemicovSeries",
    "realised_semivariance",
    "realised_semivariance_downside",
    "realised_semicovariance",
    "realised_covariance",
    "semicovariance_components",
    "generalised_covariation",
    "clt_statistic",
    "write_series_csv",
]


@dataclass(frozen=True)
class SemicovSeries:
    """Running covariation series t -> V_t on the grid t = i/n.

    ``values[i]`` is the statistic using the first i increments; V_0 = 0.
    ``centering`` optionally stores a drift rate per unit time so WLLN and
    CLT views share one computation.
    """

    values: np.ndarray
    n: int
    test_functions: tuple
    scaled: bool = True
    centering: float | None = None

    def __post_init__(self) -> None:
        if self.values[0] != 0.0:
            raise ValueError("a running series must start at 0")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) / self.n

    def at_time(self, t: float) -> float:
        """Series value at grid time t (t must not exceed the horizon)."""
        idx = math.floor(self.n * t + 1e-9)
        if not 0 <= idx < self.values.size:
            raise ValueError("t outside the computed grid")
        return float(self.values[idx])


def _running(summands: np.ndarray, n: int, funcs: tuple,
             scaled: bool) -> SemicovSeries:
    values = np.concatenate([[0.0], np.cumsum(summands) / n])
    return SemicovSeries(values=values, n=n, test_functions=funcs,
                         scaled=scaled)


def _prepare(increments, tau, scaled: bool) -> np.ndarray:
    x = np.asarray(increments, dtype=float)
    if x.ndim != 1:
        raise ValueError("increments must be a 1-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("increments must be finite")
    if scaled:
        if not tau > 0:
            raise ValueError("increment scale must be positive")
        x = x / tau
    return x


def generalised_covariation(inc1, inc2, tau1: float, tau2: float, n: int,
                            func1: TestFunction,
                            func2: TestFunction | None = None,
                            scaled: bool = True) -> SemicovSeries:
    """(1/n) running sum of func1(x_i) func2(y_i) over rescaled increments.

    ``func2`` defaults to ``func1``.  Powers below 1 are rejected at
    :class:`TestFunction` construction.
    """
    func2 = func1 if func2 is None else func2
    x = _prepare(inc1, tau1, scaled)
    y = _prepare(inc2, tau2, scaled)
    if x.size != y.size:
        raise ValueError("increment series must have equal length")
    return _running(func1.evaluate(x) * func2.evaluate(y), n,
                    (func1, func2), scaled)


def realised_semivariance(increments, tau: float, n: int,
                          scaled: bool = True) -> SemicovSeries:
    """Upside realised semivariance (1/n) sum x_i^2 1{x_i >= 0}."""
    func = TestFunction.squared_positive_part()
    x = _prepare(increments, tau, scaled)
    return _running(func.evaluate(x), n, (func,), scaled)


def realised_semivariance_downside(increments, tau: float, n: int,
                                   scaled: bool = True) -> SemicovSeries:
    """Downside complement (1/n) sum x_i^2 1{x_i < 0} (strict negativity, so
    upside + downside equals realised variance with no double counting)."""
    x = _prepare(increments, tau, scaled)
    func = TestFunction(2.0, Indicator.NONPOSITIVE)
    summands = np.where(x < 0, x * x, 0.0)
    return _running(summands, n, (func,), scaled)


def realised_semicovariance(inc1, inc2, tau1: float, tau2: float, n: int,
                            scaled: bool = True) -> SemicovSeries:
    """Concordant-positive semicovariance (1/n) sum p(x_i) p(y_i)."""
    p = TestFunction.positive_part()
    return generalised_covariation(inc1, inc2, tau1, tau2, n, p, p,
                                   scaled=scaled)


def realised_covariance(inc1, inc2, tau1: float, tau2: float, n: int,
                        scaled: bool = True) -> SemicovSeries:
    """(1/n) running sum of x_i y_i."""
    x = _prepare(inc1, tau1, scaled)
    y = _prepare(inc2, tau2, scaled)
    if x.size != y.size:
        raise ValueError("increment series must have equal length")
    f = TestFunction(1.0, Indicator.ALL)
    return _running(x * y, n, (f, f), scaled)


def semicovariance_components(inc1, inc2, tau1: float, tau2: float, n: int,
                              scaled: bool = True) -> dict:
    """Signed decomposition {pp, nn, pn, np} with p(x) = max(x, 0) and
    n(x) = min(x, 0); the four running series sum to realised covariance
    exactly (x y = (p(x)+n(x))(p(y)+n(y)))."""
    x = _prepare(inc1, tau1, scaled)
    y = _prepare(inc2, tau2, scaled)
    if x.size != y.size:
        raise ValueError("increment series must have equal length")
    px, nx = np.maximum(x, 0.0), np.minimum(x, 0.0)
    py, ny = np.maximum(y, 0.0), np.minimum(y, 0.0)
    p = TestFunction.positive_part()
    m = TestFunction.negative_part()
    return {
        "pp": _running(px * py, n, (p, p), scaled),
        "nn": _running(nx * ny, n, (m, m), scaled),
        "pn": _running(px * ny, n, (p, m), scaled),
        "np": _running(nx * py, n, (m, p), scaled),
    }


def clt_statistic(series: SemicovSeries, target_drift) -> np.ndarray:
    """t -> sqrt(n) (V_t - centering(t)) on the grid.

    ``target_drift`` is either a drift rate per unit time (centering(t) =
    rate * t) or a precomputed centering vector on the same grid.
    """
    t = series.times
    drift = np.asarray(target_drift, dtype=float)
    if drift.ndim == 0:
        centering = float(drift) * t
    else:
        if drift.shape != series.values.shape:
            raise ValueError("centering vector must match the series grid")
        centering = drift
    return math.sqrt(series.n) * (series.values - centering)


def write_series_csv(series: SemicovSeries, file,
                     statistic: np.ndarray | None = None) -> None:
    """CSV export with a JSON metadata header line.

    First line: ``# {json metadata}``; then rows (i, t, value[, statistic]).
    """
    meta = {
        "n": series.n,
        "scaled": series.scaled,
        "centering": series.centering,
        "test_functions": [
            {"power": tf.power, "indicator": tf.indicator.value,
             "centered": tf.centered}
            for tf in series.test_functions
        ],
    }
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="") if own else file
    try:
        fh.write("# " + json.dumps(meta) + "\n")
        writer = csv.writer(fh)
        header = ["i", "t", "value"]
        if statistic is not None:
            header.append("statistic")
        writer.writerow(header)
        for i, v in enumerate(series.values):
            row = [i, repr(i / series.n), repr(float(v))]
            if statistic is not None:
                row.append(repr(float(statistic[i])))
            writer.writerow(row)
    finally:
        if own:
            fh.close()
