"""Kernel and covariance-structure checks against independent closed forms.

Oracles used here are computed directly from scipy special functions:
the gamma-kernel variogram has a Bessel-K closed form, kernel norms
reduce to Gamma/Beta integrals, and the cross inner product of two gamma
kernels is a confluent hypergeometric U value.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn
from scipy.special import hyperu, kv

from bsscov import (
    BivariateCovarianceModel,
    BivariateKernelSpec,
    CovarianceModel,
    KernelSpec,
    kernel_eval,
    limit_lag_correlations,
    variogram,
    write_lag_correlations_csv,
)

ALPHA = -0.25
DECAY = 1.0


def bessel_variogram(t, alpha=ALPHA, decay=DECAY):
    """Closed-form variogram of the gamma kernel."""
    t = np.asarray(t, dtype=float)
    norm_sq = gamma_fn(2 * alpha + 1) / (2 * decay) ** (2 * alpha + 1)
    nu = alpha + 0.5
    safe = np.maximum(t, 1e-300)
    cross = np.where(
        t > 0,
        gamma_fn(alpha + 1) / math.sqrt(math.pi)
        * (safe / (2 * decay)) ** nu * kv(nu, decay * safe),
        norm_sq,
    )
    return 2.0 * (norm_sq - cross)


def test_gamma_kernel_pointwise():
    k = KernelSpec("gamma", ALPHA, DECAY)
    assert kernel_eval(k, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert kernel_eval(k, 0.0) == 0.0
    assert kernel_eval(k, -2.0) == 0.0
    vals = kernel_eval(k, np.array([-1.0, 0.5]))
    assert vals[0] == 0.0 and vals[1] > 0.0


def test_power_law_kernel_pointwise():
    k = KernelSpec("power_law", ALPHA, 1.5)
    t = 0.7
    assert k.evaluate(t) == pytest.approx(t ** ALPHA * (1 + t) ** -1.5,
                                          rel=1e-14)


def test_kernel_validation():
    with pytest.raises(ValueError):
        KernelSpec("gamma", -0.5, 1.0)
    with pytest.raises(ValueError):
        KernelSpec("gamma", -0.8, 1.0)
    with pytest.raises(ValueError):
        KernelSpec("gamma", ALPHA, 0.0)
    with pytest.raises(ValueError):
        KernelSpec("lognormal", ALPHA, 1.0)


def test_bivariate_spec_validation(ref_kernel, second_kernel):
    with pytest.raises(ValueError):
        BivariateKernelSpec(ref_kernel, second_kernel, 1.5)
    with pytest.raises(ValueError):
        BivariateKernelSpec(ref_kernel, second_kernel, -1.0001)


def test_gamma_norm_sq_closed_form():
    for decay in (1.0, 2.0, 0.5):
        model = CovarianceModel(KernelSpec("gamma", ALPHA, decay))
        oracle = gamma_fn(2 * ALPHA + 1) / (2 * decay) ** (2 * ALPHA + 1)
        assert model.kernel_norm_sq() == pytest.approx(oracle, rel=1e-10)


def test_power_law_norm_sq_closed_form():
    decay = 1.5
    model = CovarianceModel(KernelSpec("power_law", ALPHA, decay))
    oracle = beta_fn(2 * ALPHA + 1, 2 * decay - 2 * ALPHA - 1)
    assert model.kernel_norm_sq() == pytest.approx(oracle, rel=1e-9)


def test_gamma_variogram_matches_bessel_oracle(ref_model):
    ts = np.array([1.0 / 4096, 0.01, 0.1, 1.0, 3.0])
    err = np.max(np.abs(ref_model.variogram(ts) - bessel_variogram(ts)))
    assert err < 1e-10
    assert ref_model.variogram(0.0) == 0.0
    scalar = ref_model.variogram(0.5)
    assert isinstance(scalar, float)
    assert variogram(ref_model, 0.5) == scalar


def test_increment_scale_squares_to_variogram(ref_model):
    for n in (64, 256, 4096):
        tau = ref_model.increment_scale(n)
        assert tau ** 2 == pytest.approx(ref_model.variogram(1.0 / n),
                                         rel=1e-12)


def test_autocovariance_consistent_with_variogram(ref_model):
    # R(t) = 2 (||g||^2 - autocov(t)) ties the two surfaces together.
    t = 0.3
    lhs = ref_model.variogram(t)
    rhs = 2.0 * (ref_model.kernel_norm_sq() - ref_model.autocovariance(t))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_lag_correlations_basic_structure(ref_model):
    r = ref_model.lag_correlations(1000, 20)
    assert r.shape == (21,)
    assert r[0] == pytest.approx(1.0, abs=1e-12)
    limit = limit_lag_correlations(ALPHA, np.arange(1, 21))
    err_coarse = np.max(np.abs(
        ref_model.lag_correlations(100, 20)[1:] - limit))
    err_fine = np.max(np.abs(r[1:] - limit))
    assert err_fine < 2e-2
    assert err_fine < err_coarse


def test_limit_lag_correlations_hand_values():
    c = 2 * ALPHA + 1  # 0.5
    rho1 = limit_lag_correlations(ALPHA, [1])[0]
    assert rho1 == pytest.approx((2.0 ** c - 2.0) / 2.0, rel=1e-14)
    rho = limit_lag_correlations(ALPHA, np.arange(1, 40))
    assert np.all(rho < 0)
    assert np.all(np.diff(np.abs(rho)) < 0)
    # power-law tail: rho(j) ~ const * j^(c-2)
    ratio = rho[19] / rho[9]
    assert ratio == pytest.approx(2.0 ** (c - 2.0), rel=0.05)


def test_tail_energy_fraction_behaviour(ref_model):
    f_small = ref_model.tail_energy_fraction(1024, 0.1)
    f_large = ref_model.tail_energy_fraction(64, 0.1)
    assert 0.0 < f_small < f_large < 1.0
    assert ref_model.tail_energy_fraction(256, 0.0) >= \
        ref_model.tail_energy_fraction(256, 0.1)


def test_tail_energy_bound_dominates_true_tail():
    for spec in (KernelSpec("gamma", ALPHA, DECAY),
                 KernelSpec("power_law", ALPHA, 1.5)):
        for horizon in (0.5, 2.0, 8.0):
            true_tail, _ = quad(lambda t: spec.evaluate(t) ** 2,
                                horizon, np.inf)
            bound = spec.tail_energy_bound(horizon)
            assert bound >= true_tail * (1 - 1e-9)


def test_support_horizon_meets_tolerance(ref_kernel):
    tol = 1e-6
    h = ref_kernel.support_horizon(tol)
    assert ref_kernel.tail_energy_bound(h) <= tol
    assert ref_kernel.tail_energy_bound(h / 2.0) > tol or h <= 2.0


def test_derivative_matches_finite_difference():
    eps = 1e-6
    for spec in (KernelSpec("gamma", ALPHA, DECAY),
                 KernelSpec("power_law", ALPHA, 1.5)):
        for t in (0.3, 0.7, 2.0):
            fd = (spec.evaluate(t + eps) - spec.evaluate(t - eps)) / (2 * eps)
            assert spec.derivative(t) == pytest.approx(fd, rel=1e-6)
        assert spec.derivative(0.0) == 0.0


def test_smooth_factor_decomposition():
    for spec in (KernelSpec("gamma", ALPHA, DECAY),
                 KernelSpec("power_law", ALPHA, 1.5)):
        t = np.array([0.2, 1.0, 3.0])
        recon = t ** spec.alpha * spec.smooth_factor(t)
        np.testing.assert_allclose(recon, spec.evaluate(t), rtol=1e-14)


def test_cross_inner_matches_hyperu_oracle(pair_spec):
    model = BivariateCovarianceModel(pair_spec)
    a1, l1 = pair_spec.k1.alpha, pair_spec.k1.decay
    a2, l2 = pair_spec.k2.alpha, pair_spec.k2.decay
    ts = np.array([0.01, 0.25, 1.0])
    oracle = (ts ** (a1 + a2 + 1) * np.exp(-l2 * ts) * gamma_fn(a1 + 1)
              * hyperu(a1 + 1, a1 + a2 + 2, (l1 + l2) * ts))
    np.testing.assert_allclose(model.kernel_inner(0, 1, ts), oracle,
                               rtol=1e-8)


def test_cross_lag_table_structure(pair_spec):
    model = BivariateCovarianceModel(pair_spec)
    table = model.cross_lag_correlations(512, 8)
    assert table.base_correlation == pytest.approx(
        table.correlation(0, 1, 0), rel=1e-12)
    # time reversal swaps the components: r12(k) = r21(-k)
    for k in (-3, -1, 1, 3):
        assert table.correlation(0, 1, k) == pytest.approx(
            table.correlation(1, 0, -k), rel=1e-12)
    uni = CovarianceModel(pair_spec.k1).lag_correlations(512, 8)
    np.testing.assert_allclose(table.auto[0], uni, rtol=1e-10, atol=1e-12)
    for k in (0, 2, 5):
        assert table.correlation(0, 0, k) == pytest.approx(uni[k],
                                                           rel=1e-10)


def test_cross_base_scales_with_rho(ref_kernel, second_kernel):
    base = {}
    for rho in (0.25, 0.5):
        spec = BivariateKernelSpec(ref_kernel, second_kernel, rho)
        model = BivariateCovarianceModel(spec)
        base[rho] = model.cross_lag_correlations(256, 2).base_correlation
    assert base[0.5] == pytest.approx(2.0 * base[0.25], rel=1e-10)


def test_variogram_pair_consistency(pair_spec, ref_model):
    model = BivariateCovarianceModel(pair_spec)
    t = 0.4
    assert model.variogram_pair(0, 0, t) == pytest.approx(
        ref_model.variogram(t), rel=1e-12)
    assert model.variogram_pair(0, 1, 0.0) == pytest.approx(
        model.base_constant(0, 1), rel=1e-12)
    taus = model.increment_scales(256)
    assert taus[0] == pytest.approx(ref_model.increment_scale(256),
                                    rel=1e-12)


def test_write_lag_correlations_csv(tmp_path, ref_model):
    lags = np.arange(0, 6)
    values = ref_model.lag_correlations(256, 5)
    out = tmp_path / "lags.csv"
    write_lag_correlations_csv(out, lags, values)
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("lag")
    assert len(lines) == 7
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[1]) == pytest.approx(1.0)
