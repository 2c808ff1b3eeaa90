import numpy as np
import pytest

from bodyfuse import kernels
from bodyfuse.body_model import vertices_and_jacobian
from conftest import random_state

needs_compiled = pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")


@needs_compiled
def test_default_is_compiled_when_available():
    assert kernels.DEFAULT in kernels.BACKENDS


@needs_compiled
@pytest.mark.parametrize("seed", range(3))
def test_skin_jacobian_parity(model, seed):
    s = random_state(model, np.random.default_rng(seed))
    vp, Jp = vertices_and_jacobian(model, s, backend="python")
    vc, Jc = vertices_and_jacobian(model, s, backend="compiled")
    assert np.abs(vp - vc).max() < 1e-12
    assert np.abs(Jp - Jc).max() < 1e-12


@needs_compiled
def test_cov_blocks_parity_and_symmetry():
    rng = np.random.default_rng(0)
    J = rng.standard_normal((50, 3, 85))
    var = rng.uniform(0.1, 2.0, 85)
    a = kernels.get_backend("python").cov_blocks(J, var)
    b = kernels.get_backend("compiled").cov_blocks(J, var)
    assert np.abs(a - b).max() < 1e-12
    np.testing.assert_array_equal(b, np.swapaxes(b, 1, 2))


def test_python_cov_blocks_oracle():
    rng = np.random.default_rng(1)
    J = rng.standard_normal((5, 3, 7))
    var = rng.uniform(0.1, 2.0, 7)
    got = kernels.get_backend("python").cov_blocks(J, var)
    for m in range(5):
        np.testing.assert_allclose(got[m], J[m] @ np.diag(var) @ J[m].T, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
