import numpy as np
import pytest

from bodyfuse import geometry as geo
from bodyfuse.body_model import HumanState, boxplus, synth_model


@pytest.fixture(scope="session")
def model():
    return synth_model(600, 7)


@pytest.fixture(scope="session")
def big_model():
    return synth_model(6890, 0)


def random_quat(rng):
    return geo.canonical(geo.normalize(rng.standard_normal(4)))


def random_transform(rng, scale=1.0):
    return geo.RigidTransform(scale * rng.standard_normal(3), random_quat(rng))


def random_state(model, rng, spread=0.3, depth=3.0):
    root = geo.RigidTransform(np.array([0.0, 0.0, depth]) + 0.3 * rng.standard_normal(3), random_quat(rng))
    delta = spread * rng.standard_normal(model.dim)
    delta[-6:] = 0.0
    for sl in range(model.n_betas, model.n_betas + 3 * (model.n_joints - 1), 3):
        n = np.linalg.norm(delta[sl:sl + 3])
        if n > 0.9:
            delta[sl:sl + 3] *= 0.9 / n
    return boxplus(HumanState.rest(model, root), delta)


def numeric_jacobian(f, x0_state, dim, h=1e-6):
    """Central differences of ``f(boxplus(state, d))`` over error coordinates."""
    cols = []
    for d in range(dim):
        e = np.zeros(dim)
        e[d] = h
        cols.append((f(boxplus(x0_state, e)) - f(boxplus(x0_state, -e))).ravel() / (2 * h))
    return np.column_stack(cols)
