import numpy as np
import pytest
from scipy import stats

from bodyfuse import geometry as geo
from bodyfuse.body_model import HumanState, boxminus, boxplus
from bodyfuse.fusion import FusionConfig, FusionError, fuse, mahalanobis_gate, mlp_residual
from bodyfuse.motion import GruWeights
from bodyfuse.prob_state import GaussianBodyState
from conftest import random_state


def pair(model, seed, spread=0.05):
    rng = np.random.default_rng(seed)
    a = random_state(model, rng)
    b = boxplus(a, spread * rng.standard_normal(model.dim))
    va = rng.uniform(1e-4, 1e-2, model.dim)
    vb = rng.uniform(1e-4, 1e-2, model.dim)
    return GaussianBodyState(a, va), GaussianBodyState(b, vb)


def euclid(model):
    sl = model.slices()
    return np.r_[sl["beta"], sl["r"]]


def test_uninformative_motion_prior(model):
    img, mot = pair(model, 0)
    mot = GaussianBodyState(mot.mean, np.full(model.dim, 1e12))
    post = fuse(img, mot)
    assert np.abs(boxminus(post.mean, img.mean)).max() < 1e-6
    assert np.max(np.abs(post.var / img.var - 1)) < 1e-3


def test_uninformative_image_prior(model):
    img, mot = pair(model, 1)
    img = GaussianBodyState(img.mean, np.full(model.dim, 1e12))
    post = fuse(img, mot)
    assert np.abs(boxminus(post.mean, mot.mean)).max() < 1e-6
    assert np.max(np.abs(post.var / mot.var - 1)) < 1e-3


def test_equal_variances_midpoint(model):
    img, mot = pair(model, 2)
    mot = GaussianBodyState(mot.mean, img.var)
    post = fuse(img, mot)
    np.testing.assert_allclose(post.var, img.var / 2, rtol=1e-15)
    np.testing.assert_allclose(boxminus(post.mean, img.mean), boxminus(mot.mean, img.mean) / 2, atol=1e-12)


def test_scalar_product_oracle(model):
    img, mot = pair(model, 3)
    post = fuse(img, mot)
    idx = euclid(model)
    xi = np.r_[img.mean.beta, img.mean.r]
    xm = np.r_[mot.mean.beta, mot.mean.r]
    vi, vm = img.var[idx], mot.var[idx]
    var = vi * vm / (vi + vm)
    mu = (xi * vm + xm * vi) / (vi + vm)
    assert np.abs(post.var[idx] - var).max() < 1e-12
    assert np.abs(np.r_[post.mean.beta, post.mean.r] - mu).max() < 1e-12


def test_posterior_variance_never_grows(model):
    img, mot = pair(model, 4)
    post = fuse(img, mot)
    assert np.all(post.var <= np.minimum(img.var, mot.var))


def test_symmetric_on_euclidean_dims(model):
    img, mot = pair(model, 5)
    a, b = fuse(img, mot), fuse(mot, img)
    assert np.abs(a.var - b.var).max() < 1e-12
    assert np.abs(np.r_[a.mean.beta, a.mean.r] - np.r_[b.mean.beta, b.mean.r]).max() < 1e-12


def test_equal_means_unchanged(model):
    img, mot = pair(model, 6)
    post = fuse(img, GaussianBodyState(img.mean, mot.var))
    np.testing.assert_array_equal(post.mean.beta, img.mean.beta)
    np.testing.assert_array_equal(post.mean.r, img.mean.r)
    np.testing.assert_allclose(post.mean.theta, img.mean.theta, atol=1e-15)


def test_linearize_at_motion(model):
    img, mot = pair(model, 7)
    a = fuse(img, mot)
    b = fuse(img, mot, FusionConfig(linearize_at="motion"))
    diff = boxminus(a.mean, b.mean)
    idx = euclid(model)
    assert np.abs(diff[idx]).max() < 1e-12
    # rotation dims agree to second order in the offset
    d = np.abs(boxminus(mot.mean, img.mean)).max()
    assert np.abs(diff).max() < d * d
    with pytest.raises(ValueError):
        fuse(img, mot, FusionConfig(linearize_at="middle"))


def test_gate_identical_means(model):
    img, _ = pair(model, 8)
    res = mahalanobis_gate(img, img, 10.0)
    assert res.accept and res.statistic == 0.0


def _offset(model, sigmas):
    s = HumanState.rest(model, geo.RigidTransform([0, 0, 3.0], geo.IDENTITY_QUAT))
    var = np.full(model.dim, 1e-4)
    d = np.zeros(model.dim)
    d[0] = sigmas * np.sqrt(2e-4)  # sigma of the difference
    return GaussianBodyState(s, var), GaussianBodyState(boxplus(s, d), var)


def test_gate_chi_square_threshold(model):
    thr = stats.chi2.ppf(0.999, model.dim)
    assert thr == pytest.approx(131.04, abs=0.01)
    # a 10-sigma offset in one dim gives a statistic of 100, below the 85-dof
    # quantile, so the gate accepts; 12 sigma (144) crosses it
    img, mot = _offset(model, 10.0)
    res = mahalanobis_gate(img, mot, thr)
    assert res.statistic == pytest.approx(100.0, rel=1e-9)
    assert res.accept
    img, mot = _offset(model, 12.0)
    res = mahalanobis_gate(img, mot, thr)
    assert not res.accept
    assert fuse(img, mot, FusionConfig(gate=thr)) is img


def test_gate_homogeneous(model):
    img, mot = pair(model, 9)
    idx = euclid(model)
    c = 3.0
    d = boxminus(mot.mean, img.mean)
    d2 = d.copy()
    d2[idx] *= c
    var_i, var_m = img.var.copy(), mot.var.copy()
    var_i[idx] *= c * c
    var_m[idx] *= c * c
    d2[~np.isin(np.arange(model.dim), idx)] = 0.0
    d[~np.isin(np.arange(model.dim), idx)] = 0.0
    a = mahalanobis_gate(img, GaussianBodyState(boxplus(img.mean, d), mot.var), 1.0).statistic
    b = mahalanobis_gate(GaussianBodyState(img.mean, var_i), GaussianBodyState(boxplus(img.mean, d2), var_m), 1.0).statistic
    assert b == pytest.approx(a, rel=1e-12)


def test_non_finite_input(model):
    img, mot = pair(model, 10)
    bad = GaussianBodyState(HumanState(img.mean.beta * np.nan, img.mean.theta, img.mean.r, img.mean.q), img.var)
    with pytest.raises(FusionError):
        fuse(bad, mot)


def test_residual_hook(model):
    img, mot = pair(model, 11)
    shift = np.zeros(model.dim)
    shift[0] = 0.25
    post = fuse(img, mot, FusionConfig(residual=lambda i, m, f: shift))
    base = fuse(img, mot)
    assert post.mean.beta[0] - base.mean.beta[0] == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(FusionError):
        fuse(img, mot, FusionConfig(residual=lambda i, m, f: np.zeros(3)))
    zero = mlp_residual(GruWeights.zeros(1, 4 * model.dim, model.dim))
    z = fuse(img, mot, FusionConfig(residual=zero))
    np.testing.assert_allclose(boxminus(z.mean, base.mean), 0.0, atol=1e-15)
