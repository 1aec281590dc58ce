import numpy as np
import pytest

from vsddpm import augment as aug
from vsddpm.errors import AngleOutOfRange, FactorOutOfRange, NegativeSigma, OrderTooHigh
from vsddpm.volume_io import Volume


def _blob(shape=(24, 24, 24), width=4.0):
    g = np.indices(shape, dtype=float)
    c = (np.asarray(shape) - 1) / 2
    d2 = sum((g[i] - c[i]) ** 2 for i in range(3))
    return Volume(np.exp(-0.5 * d2 / width**2))


def test_identities(rng, backend):
    v = _blob()
    assert np.max(np.abs(aug.rotate(v, (0, 0, 0)).data - v.data)) <= 1e-12
    assert np.max(np.abs(aug.scale(v, (1, 1, 1)).data - v.data)) <= 1e-12
    assert np.array_equal(aug.intensity_shift(v, 0.0).data, v.data)
    assert np.array_equal(aug.gaussian_noise(v, 0.0, rng).data, v.data)
    assert np.array_equal(aug.gaussian_smooth(v, 0.0).data, v.data)
    assert np.array_equal(aug.bias_field(v, 2, 0.0, rng).data, v.data)


def test_inverse_compositions(backend):
    v = _blob()
    rng_ = float(v.data.max() - v.data.min())
    back = aug.rotate(aug.rotate(v, (2.5, -1.5, 3.0)), (0, 0, -3.0))
    back = aug.rotate(back, (0, 1.5, 0))
    back = aug.rotate(back, (-2.5, 0, 0))
    assert np.max(np.abs(back.data - v.data)) < 0.05 * rng_
    # the zoomed copy must keep the blob inside the grid
    v = _blob((32, 32, 32), 3.0)
    back = aug.scale(aug.scale(v, (2, 2, 2)), (0.5, 0.5, 0.5))
    assert np.max(np.abs(back.data - v.data)) < 0.05 * rng_


def test_rotation_matrix_orthonormal():
    m = aug.rotation_matrix((1.0, -2.0, 3.0))
    np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-14)


def test_constant_volume_preserved(backend):
    v = Volume(np.full((10, 10, 10), 0.3))
    for out in (aug.rotate(v, (3, 3, 3)), aug.scale(v, (1.3, 0.8, 1)), aug.shear(v, (0.1, 0, -0.2)),
                aug.gaussian_smooth(v, 1.0)):
        assert np.max(np.abs(out.data - 0.3)) < 1e-12


def test_noise_moments():
    v = Volume(np.zeros((100, 100, 100)))
    out = aug.gaussian_noise(v, 0.2, np.random.default_rng(0))
    assert abs(out.data.var() / 0.04 - 1) < 0.01


def test_smoothing_keeps_mean_of_periodic_free_volume(rng):
    v = Volume(rng.standard_normal((20, 20, 20)) + 5)
    out = aug.gaussian_smooth(v, 1.0)
    assert abs(out.data.mean() - v.data.mean()) < 0.05
    assert out.data.std() < v.data.std()
    np.testing.assert_allclose(aug.gaussian_kernel(1.0).sum(), 1.0)


def test_bias_field_bounds(rng):
    v = Volume(rng.uniform(0.5, 2.0, (12, 12, 12)))
    for order in range(4):
        out = aug.bias_field(v, order, 0.2, rng)
        ratio = out.data / v.data
        assert ratio.min() >= np.exp(-0.2) - 1e-12 and ratio.max() <= np.exp(0.2) + 1e-12


def test_guards(rng):
    v = _blob((8, 8, 8))
    with pytest.raises(AngleOutOfRange):
        aug.rotate(v, (4, 0, 0))
    with pytest.raises(FactorOutOfRange):
        aug.scale(v, (3, 1, 1))
    with pytest.raises(FactorOutOfRange):
        aug.shear(v, (0.6, 0, 0))
    with pytest.raises(NegativeSigma):
        aug.gaussian_noise(v, -1, rng)
    with pytest.raises(OrderTooHigh):
        aug.bias_field(v, 4, 0.1, rng)


def test_augment_deterministic_and_bounded():
    v = Volume(np.clip(_blob((12, 12, 12)).data * 2 - 1, -1, 1), domain="norm_sym")
    cfg = aug.AugmentConfig(seed=3)
    a, b = aug.augment(v, cfg), aug.augment(v, cfg)
    assert np.array_equal(a.data, b.data)
    assert a.shape == v.shape and a.domain is v.domain
    assert a.data.min() >= -1 and a.data.max() <= 1
    assert aug.AugmentConfig.from_dict({"seed": 3, "scale_range": [0.9, 1.1]}).scale_range == (0.9, 1.1)
