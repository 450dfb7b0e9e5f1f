import numpy as np
import pytest

from cbi2 import ModelParams


@pytest.fixture
def diagonal_params() -> ModelParams:
    """Decoupled unit model: each coordinate is scalar CIR with a = b = sigma = 1."""
    return ModelParams(1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0)


@pytest.fixture
def coupled_params() -> ModelParams:
    """Coupled reference model, kappa = 0.06."""
    return ModelParams(1.0, 1.0, 1.0, 0.2, 0.3, 1.0, 0.5, 0.5)


def assert_mat_close(m, expected, rtol=1e-12, atol=1e-14):
    np.testing.assert_allclose(m.to_array(), np.asarray(expected), rtol=rtol, atol=atol)


def assert_vec_close(v, expected, rtol=1e-12, atol=1e-14):
    np.testing.assert_allclose(v.to_array(), np.asarray(expected), rtol=rtol, atol=atol)
