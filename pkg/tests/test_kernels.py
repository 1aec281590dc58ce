"""The numba kernels must agree with their numpy twins."""
import numpy as np
import pytest

from vsddpm import kernels

pytestmark = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


def test_correlate_parity(rng):
    x = rng.standard_normal((9, 10, 11))
    w = rng.standard_normal(5)
    for axis in range(3):
        np.testing.assert_allclose(kernels.correlate1d_valid_numba(x, w, axis),
                                   kernels.correlate1d_valid_numpy(x, w, axis), rtol=0, atol=1e-12)


def test_correlate_matches_direct_sum(rng):
    x = rng.standard_normal((6, 5, 4))
    w = np.array([0.2, -1.0, 0.5])
    out = kernels.correlate1d_valid_numpy(x, w, 0)
    direct = sum(w[j] * x[j:j + 4] for j in range(3))
    np.testing.assert_allclose(out, direct, atol=1e-14)


def test_min_sq_distances_parity(rng):
    a = rng.uniform(0, 10, (137, 3))
    b = rng.uniform(0, 10, (59, 3))
    brute = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1).min(1)
    np.testing.assert_allclose(kernels.min_sq_distances_numba(a, b), brute, atol=1e-12)
    np.testing.assert_allclose(kernels.min_sq_distances_numpy(a, b, chunk=16), brute, atol=1e-9)


def test_accumulate_parity(rng):
    offsets = np.array([[0, 0, 0], [2, 1, 3], [4, 4, 2]], dtype=np.int64)
    outs = rng.standard_normal((3, 4, 5, 3))
    w = rng.uniform(0.1, 1.0, (4, 5, 3))
    results = []
    for fn in (kernels.accumulate_windows_numpy, kernels.accumulate_windows_numba):
        acc, ws = np.zeros((8, 9, 6)), np.zeros((8, 9, 6))
        fn(acc, ws, outs, offsets, w)
        results.append((acc, ws))
    np.testing.assert_allclose(results[0][0], results[1][0], atol=1e-13)
    np.testing.assert_allclose(results[0][1], results[1][1], atol=1e-13)


def test_affine_resample_parity(rng):
    src = rng.standard_normal((7, 8, 9))
    th = 0.2
    mat = np.array([[np.cos(th), -np.sin(th), 0.0], [np.sin(th), np.cos(th), 0.0], [0.0, 0.0, 1.1]])
    off = np.array([0.3, -0.7, 0.2])
    np.testing.assert_allclose(kernels.affine_resample_numba(src, mat, off, -5.0),
                               kernels.affine_resample_numpy(src, mat, off, -5.0), atol=1e-12)


def test_affine_identity_is_exact(backend, rng):
    src = rng.standard_normal((5, 6, 7))
    out = kernels.affine_resample(src, np.eye(3), np.zeros(3), 0.0)
    np.testing.assert_array_equal(out, src)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")
