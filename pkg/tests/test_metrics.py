import csv
import json
import math

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from vsddpm import metrics
from vsddpm.errors import EmptyMask, ShapeMismatch
from vsddpm.volume_io import Mask, Volume


def _surface_oracle(bits):
    # a voxel is on the surface if any face neighbour is outside the mask or the grid
    padded = np.pad(bits, 1)
    interior = padded[1:-1, 1:-1, 1:-1].copy()
    for ax in range(3):
        for d in (-1, 1):
            interior &= np.roll(padded, d, axis=ax)[1:-1, 1:-1, 1:-1]
    return bits & ~interior


def _brute(a, b, spacing):
    pa = np.argwhere(_surface_oracle(a)) * np.asarray(spacing)
    pb = np.argwhere(_surface_oracle(b)) * np.asarray(spacing)
    d = cdist(pa, pb)
    return d.min(1), d.min(0)


def test_mae_and_offset():
    gt = Volume(np.zeros((4, 4, 4)), domain="hu")
    mask = np.zeros((4, 4, 4), bool)
    mask[:2] = True
    pred = Volume(np.where(mask, 50.0, -7.0), domain="hu")
    assert metrics.mae_hu(pred, gt, Mask(mask)) == 50.0
    assert metrics.mae_hu(gt, gt) == 0.0
    with pytest.raises(EmptyMask):
        metrics.mae_hu(pred, gt, Mask(np.zeros((4, 4, 4), bool)))


def test_psnr_identities(rng):
    assert metrics.psnr(np.zeros(4), np.full(4, 0.2), 2.0) == pytest.approx(20.0, abs=1e-9)
    assert metrics.psnr(np.ones(3), np.ones(3), 2.0) == math.inf
    a, b = rng.standard_normal(50), rng.standard_normal(50)
    p = metrics.psnr(a, b, 3.0)
    assert abs(p - (20 * math.log10(3.0) - 10 * math.log10(metrics.mse(a, b)))) < 1e-9
    assert abs(metrics.psnr(a, b, 6.0) - p - 20 * math.log10(2)) < 1e-9
    assert abs(metrics.rmse(a, b) ** 2 - metrics.mse(a, b)) < 1e-10


def test_dice_hand_counts():
    a = np.zeros((3, 3, 3), bool)
    b = np.zeros((3, 3, 3), bool)
    a[0, 0, :2] = True
    b[0, 0, 1:3] = True
    assert metrics.dice(a, b) == 0.5
    assert metrics.dice(a, a) == 1.0
    assert metrics.dice(np.zeros_like(a), np.zeros_like(a)) == 1.0
    assert metrics.dice(a, np.zeros_like(a)) == 0.0


def test_single_voxel_distance():
    a = np.zeros((1, 1, 4), bool)
    b = np.zeros((1, 1, 4), bool)
    a[0, 0, 0] = True
    b[0, 0, 3] = True
    assert metrics.hd95(a, b, spacing=(1, 1, 1)) == 3.0
    assert metrics.hd95(a, a) == 0.0
    assert metrics.nsd(a, a, 0.0) == 1.0
    assert metrics.nsd(a, b, 0.0) == 0.0
    assert metrics.hd95(a, b, spacing=(1, 1, 2.5)) == 7.5


def test_surface_matches_oracle(rng):
    for _ in range(20):
        bits = rng.random((7, 6, 5)) < 0.6
        assert np.array_equal(metrics.surface(bits), _surface_oracle(bits))


def test_against_brute_force(backend):
    rng = np.random.default_rng(21)
    for _ in range(100):
        a = rng.random((8, 8, 8)) < rng.uniform(0.1, 0.7)
        b = rng.random((8, 8, 8)) < rng.uniform(0.1, 0.7)
        spacing = tuple(rng.uniform(0.5, 2.0, 3))
        d_ab, d_ba = _brute(a, b, spacing)
        pooled = np.percentile(np.concatenate([d_ab, d_ba]), 95)
        assert abs(metrics.hd95(a, b, spacing) - pooled) <= 1e-9
        tol = float(rng.uniform(0.5, 2.0))
        want = ((d_ab <= tol).sum() + (d_ba <= tol).sum()) / (d_ab.size + d_ba.size)
        assert abs(metrics.nsd(a, b, tol, spacing) - want) <= 1e-9
        alt = max(np.percentile(d_ab, 95), np.percentile(d_ba, 95))
        assert abs(metrics.hd95(a, b, spacing, convention="max_directed") - alt) <= 1e-9


def test_surface_metric_errors():
    with pytest.raises(EmptyMask):
        metrics.hd95(np.zeros((3, 3, 3), bool), np.ones((3, 3, 3), bool))
    with pytest.raises(ShapeMismatch):
        metrics.dice(np.zeros((3, 3, 3)), np.zeros((3, 3, 2)))
    with pytest.raises(ValueError):
        metrics.hd95(np.ones((3, 3, 3)), np.ones((3, 3, 3)), convention="mean")


def test_report_identity(rng):
    from .conftest import validate

    v = Volume(rng.uniform(-1, 1, (16, 16, 16)))
    seg = Mask(v.data > 0)
    rep = metrics.report(v, v, {"pred_seg": seg, "gt_seg": seg}, metrics.MetricsConfig(data_range=2.0, ms_ssim_scales=2))
    assert rep.mae_hu == 0 and rep.psnr_db == math.inf and rep.dice == 1 and rep.hd95_mm == 0
    assert abs(rep.ssim - 1) < 1e-9
    d = rep.to_dict()
    assert set(d) == {"mae_hu", "mse", "rmse", "psnr_db", "ssim", "ms_ssim", "dice", "hd95_mm", "nsd"}
    validate(json.loads(json.dumps({k: v for k, v in d.items() if k != "psnr_db"})), "metrics_report")


def test_report_omits_unavailable(rng):
    small = rng.uniform(-1, 1, (5, 5, 5))
    d = metrics.report(small, small * 0.9).to_dict()
    assert set(d) == {"mae_hu", "mse", "rmse", "psnr_db"}


def test_append_csv(tmp_path):
    path = tmp_path / "m.csv"
    metrics.append_csv(path, {"case": "a", "mae": 1.0})
    metrics.append_csv(path, {"case": "b", "mae": 2.0})
    rows = list(csv.DictReader(path.open()))
    assert [r["case"] for r in rows] == ["a", "b"]
