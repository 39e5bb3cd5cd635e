"""Shared fixtures: reference kernels and the cached Hermite expansion."""

import pytest

from bsscov import (
    BivariateKernelSpec,
    CovarianceModel,
    KernelSpec,
    TestFunction,
    expansion_coefficients,
)

ALPHA_REF = -0.25
DECAY_REF = 1.0


@pytest.fixture(scope="session")
def ref_kernel():
    return KernelSpec("gamma", ALPHA_REF, DECAY_REF)


@pytest.fixture(scope="session")
def second_kernel():
    return KernelSpec("gamma", ALPHA_REF, 2.0)


@pytest.fixture(scope="session")
def ref_model(ref_kernel):
    return CovarianceModel(ref_kernel)


@pytest.fixture(scope="session")
def pair_spec(ref_kernel, second_kernel):
    return BivariateKernelSpec(ref_kernel, second_kernel, 0.5)


@pytest.fixture(scope="session")
def sq_pos_expansion():
    """Hermite coefficients of x^2 1{x >= 0}, truncated at degree 40."""
    return expansion_coefficients(TestFunction.squared_positive_part(), 40)
