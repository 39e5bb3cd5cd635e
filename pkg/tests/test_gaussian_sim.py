"""Exact simulation of the standardized increment process.

The simulator must reproduce the target correlation structure (checked
by entrywise z-scores against Monte Carlo standard errors), stay
bit-reproducible across call patterns, and fall back to a dense
factorization when the circulant embedding is not nonnegative.
"""

import math

import numpy as np
import pytest

from bsscov import (
    BivariateCovarianceModel,
    BivariateKernelSpec,
    EmbeddingError,
    IncrementSimulator,
    KernelSpec,
    SimulationScheme,
    core_path_from_increments,
    simulate_increments,
    stream,
    write_core_path_csv,
)

SEED = 314159


def test_sampling_is_deterministic(ref_model):
    sim = IncrementSimulator(ref_model, 32, 1.0)
    a = sim.sample(SEED, replicate=3)
    b = sim.sample(SEED, replicate=3)
    np.testing.assert_array_equal(a.increments, b.increments)
    c = sim.sample(SEED, replicate=4)
    assert not np.array_equal(a.increments, c.increments)
    d = sim.sample(SEED + 1, replicate=3)
    assert not np.array_equal(a.increments, d.increments)


def test_batch_matches_individual_samples(ref_model):
    sim = IncrementSimulator(ref_model, 32, 1.0)
    batch = sim.sample_batch(SEED, range(4))
    for rep in range(4):
        single = sim.sample(SEED, replicate=rep)
        np.testing.assert_array_equal(batch[rep], single.increments)


def test_path_metadata(ref_model):
    sim = IncrementSimulator(ref_model, 64, 1.0)
    path = sim.sample(SEED)
    assert path.dimension == 1
    assert path.num_increments == 64
    assert path.horizon == 1.0
    assert path.scheme is SimulationScheme.CIRCULANT_EMBEDDING
    assert not path.used_fallback
    assert path.min_spectral_eig > 0
    assert path.tau[0] == pytest.approx(ref_model.increment_scale(64),
                                        rel=1e-12)


def test_increments_are_standardized(ref_model):
    sim = IncrementSimulator(ref_model, 16, 1.0)
    z = sim.sample_batch(SEED, range(4000))[:, 0, :]
    mc = z.shape[0]
    var = np.var(z, axis=0, ddof=1)
    z_scores = (var - 1.0) / math.sqrt(2.0 / (mc - 1))
    assert np.max(np.abs(z_scores)) < 4.5


def test_lag_correlations_reproduced(ref_model):
    n = 16
    sim = IncrementSimulator(ref_model, n, 1.0)
    z = sim.sample_batch(SEED, range(4000))[:, 0, :]
    target = ref_model.lag_correlations(n, 3)
    for lag in (1, 2, 3):
        prods = np.mean(z[:, :-lag] * z[:, lag:], axis=1)
        est = np.mean(prods)
        se = np.std(prods, ddof=1) / math.sqrt(len(prods))
        assert abs(est - target[lag]) < 4.0 * se, lag


def test_path_reconstruction(ref_model):
    sim = IncrementSimulator(ref_model, 8, 1.0)
    path = sim.sample(SEED)
    values = core_path_from_increments(path)
    np.testing.assert_allclose(
        values, np.cumsum(path.increments * path.tau[:, None], axis=1),
        rtol=1e-14)


def test_convenience_wrapper_matches_class(ref_model):
    path = simulate_increments(ref_model, 32, 1.0, SEED, replicate=2)
    direct = IncrementSimulator(ref_model, 32, 1.0).sample(SEED, replicate=2)
    np.testing.assert_array_equal(path.increments, direct.increments)


def test_dense_fallback_used_when_embedding_fails():
    # correlation (1, 0.9, 0) has a valid covariance but a circulant
    # extension with a negative Fourier eigenvalue
    sim = IncrementSimulator.from_correlations(np.array([1.0, 0.9, 0.0]))
    path = sim.sample(SEED)
    assert path.scheme is SimulationScheme.CHOLESKY_EXACT
    assert path.used_fallback
    assert path.min_spectral_eig < 0
    z = sim.sample_batch(SEED, range(6000))[:, 0, :]
    prods = z[:, 0] * z[:, 1]
    est = np.mean(prods)
    se = np.std(prods, ddof=1) / math.sqrt(len(prods))
    assert abs(est - 0.9) < 4.0 * se


def test_invalid_covariance_raises():
    with pytest.raises(EmbeddingError):
        IncrementSimulator.from_correlations(
            np.array([1.0, 0.9, 0.0, 0.0, 0.0]))


def test_fallback_size_cap_raises():
    with pytest.raises(EmbeddingError):
        IncrementSimulator.from_correlations(np.array([1.0, 0.9, 0.0]),
                                             max_cholesky_size=1)


def test_stream_separation():
    a = stream(1, 0, 0).standard_normal(8)
    b = stream(1, 0, 0).standard_normal(8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, stream(1, 0, 1).standard_normal(8))
    assert not np.array_equal(a, stream(1, 1, 0).standard_normal(8))
    assert not np.array_equal(a, stream(2, 0, 0).standard_normal(8))


# --- bivariate -------------------------------------------------------------

@pytest.fixture(scope="module")
def asymmetric_pair():
    """Kernel pair whose cross correlation at lag +1 and -1 differ by
    ~0.09, large enough to pin the time orientation statistically."""
    spec = BivariateKernelSpec(KernelSpec("gamma", -0.45, 0.5),
                               KernelSpec("gamma", -0.1, 4.0), 0.6)
    return BivariateCovarianceModel(spec)


def test_bivariate_shapes_and_tau(asymmetric_pair):
    sim = IncrementSimulator(asymmetric_pair, 32, 1.0)
    path = sim.sample(SEED)
    assert path.dimension == 2
    assert path.increments.shape == (2, 32)
    taus = asymmetric_pair.increment_scales(32)
    np.testing.assert_allclose(path.tau, taus, rtol=1e-12)


def test_cross_lag_orientation(asymmetric_pair):
    # regression for the cross-covariance row orientation: lag +1 means
    # component 2 lags component 1, and the two signs must not be swapped
    n = 32
    sim = IncrementSimulator(asymmetric_pair, n, 1.0)
    table = asymmetric_pair.cross_lag_correlations(n, 3)
    z = sim.sample_batch(SEED, range(6000))
    emp_plus = (z[:, 0, :-1] * z[:, 1, 1:]).mean(axis=1)
    emp_minus = (z[:, 0, 1:] * z[:, 1, :-1]).mean(axis=1)
    for emp, lag in ((emp_plus, 1), (emp_minus, -1)):
        est = emp.mean()
        se = emp.std(ddof=1) / math.sqrt(len(emp))
        right = table.correlation(0, 1, lag)
        wrong = table.correlation(0, 1, -lag)
        assert abs(est - right) < 4.0 * se, lag
        assert abs(est - wrong) > 4.0 * se, lag


def test_zero_rho_has_no_cross_correlation(ref_kernel, second_kernel):
    spec = BivariateKernelSpec(ref_kernel, second_kernel, 0.0)
    model = BivariateCovarianceModel(spec)
    sim = IncrementSimulator(model, 16, 1.0)
    z = sim.sample_batch(SEED, range(4000))
    prods = (z[:, 0, :] * z[:, 1, :]).mean(axis=1)
    est = prods.mean()
    se = prods.std(ddof=1) / math.sqrt(len(prods))
    assert abs(est) < 4.0 * se
    assert model.cross_lag_correlations(16, 2).base_correlation == 0.0


def test_write_core_path_csv(tmp_path, ref_model):
    sim = IncrementSimulator(ref_model, 8, 1.0)
    path = sim.sample(SEED)
    out = tmp_path / "core.csv"
    write_core_path_csv(path, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "i,t,x1"
    assert len(lines) == 9
    i, t, x1 = lines[1].split(",")
    assert int(i) == 1
    assert float(t) == pytest.approx(1.0 / 8)
    assert float(x1) == pytest.approx(path.increments[0, 0], rel=1e-15)
