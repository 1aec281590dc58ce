"""Image-similarity and geometric metrics for volumes and binary masks.

Surfaces are mask voxels with at least one 6-connected neighbour outside the
mask (the volume border counts as outside). Distances are Euclidean between
voxel centres scaled by the voxel spacing.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import EmptyMask, ShapeMismatch, TooManyScalesForShape, WindowTooLarge
from .losses import SSIM_WINDOW, ms_ssim3, ssim3
from .volume_io import Mask, Volume

NSD_TOLERANCE_MM = 1.0
_SIX_CONN = ndimage.generate_binary_structure(3, 1)


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _bits(m) -> np.ndarray:
    return np.asarray(getattr(m, "bits", m), dtype=bool)


def _spacing(*objs, default=(1.0, 1.0, 1.0)) -> tuple[float, float, float]:
    for o in objs:
        if hasattr(o, "spacing"):
            return tuple(o.spacing)
    return tuple(default)


def _masked_pair(pred, gt, mask):
    a, b = _arr(pred), _arr(gt)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} != {b.shape}")
    if isinstance(pred, Volume) and isinstance(gt, Volume) and not np.allclose(pred.spacing, gt.spacing):
        raise ShapeMismatch(f"spacing {pred.spacing} != {gt.spacing}")
    if mask is None:
        return a.ravel(), b.ravel()
    sel = _bits(mask)
    if sel.shape != a.shape:
        raise ShapeMismatch(f"mask {sel.shape} != volume {a.shape}")
    if not sel.any():
        raise EmptyMask("evaluation mask is empty")
    return a[sel], b[sel]


def mae_hu(pred, gt, mask=None) -> float:
    a, b = _masked_pair(pred, gt, mask)
    return float(np.mean(np.abs(a - b)))


def mse(pred, gt, mask=None) -> float:
    a, b = _masked_pair(pred, gt, mask)
    return float(np.mean((a - b) ** 2))


def rmse(pred, gt, mask=None) -> float:
    return math.sqrt(mse(pred, gt, mask))


def psnr(pred, gt, data_range: float, mask=None) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` when the inputs are identical."""
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    err = mse(pred, gt, mask)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / err)


def dice(a, b) -> float:
    """Dice overlap; 1.0 when both masks are empty, 0.0 when exactly one is."""
    x, y = _bits(a), _bits(b)
    if x.shape != y.shape:
        raise ShapeMismatch(f"{x.shape} != {y.shape}")
    sa, sb = int(x.sum()), int(y.sum())
    if sa + sb == 0:
        return 1.0
    return 2.0 * int(np.logical_and(x, y).sum()) / (sa + sb)


def surface(bits: np.ndarray) -> np.ndarray:
    """Boolean grid of boundary voxels under 6-connectivity."""
    bits = np.asarray(bits, dtype=bool)
    eroded = ndimage.binary_erosion(bits, structure=_SIX_CONN, border_value=0)
    return bits & ~eroded


def surface_points(bits: np.ndarray, spacing) -> np.ndarray:
    return np.argwhere(surface(bits)).astype(np.float64) * np.asarray(spacing, dtype=np.float64)


def directed_surface_distances(a, b, spacing=None) -> tuple[np.ndarray, np.ndarray]:
    """Distances (mm) from every surface voxel of ``a`` to ``b``'s surface and back."""
    x, y = _bits(a), _bits(b)
    if x.shape != y.shape:
        raise ShapeMismatch(f"{x.shape} != {y.shape}")
    if not x.any() or not y.any():
        raise EmptyMask("surface distances need two non-empty masks")
    sp = _spacing(a, b) if spacing is None else tuple(spacing)
    pa, pb = surface_points(x, sp), surface_points(y, sp)
    return np.sqrt(kernels.min_sq_distances(pa, pb)), np.sqrt(kernels.min_sq_distances(pb, pa))


def hd95(a, b, spacing=None, convention: str = "pooled") -> float:
    """95th-percentile symmetric surface distance (mm).

    ``pooled`` takes the percentile of both directed distance sets together;
    ``max_directed`` takes the larger of the two per-direction percentiles.
    """
    d_ab, d_ba = directed_surface_distances(a, b, spacing)
    if convention == "pooled":
        return float(np.percentile(np.concatenate([d_ab, d_ba]), 95))
    if convention == "max_directed":
        return float(max(np.percentile(d_ab, 95), np.percentile(d_ba, 95)))
    raise ValueError(f"unknown hd95 convention {convention!r}")


def nsd(a, b, tolerance_mm: float = NSD_TOLERANCE_MM, spacing=None) -> float:
    """Normalized surface Dice: share of both surfaces lying within tolerance of the other."""
    if tolerance_mm < 0:
        raise ValueError("tolerance must be non-negative")
    d_ab, d_ba = directed_surface_distances(a, b, spacing)
    hits = int((d_ab <= tolerance_mm).sum()) + int((d_ba <= tolerance_mm).sum())
    return hits / (d_ab.size + d_ba.size)


@dataclass
class MetricsReport:
    mae_hu: float | None = None
    mse: float | None = None
    rmse: float | None = None
    psnr_db: float | None = None
    ssim: float | None = None
    ms_ssim: float | None = None
    dice: float | None = None
    hd95_mm: float | None = None
    nsd: float | None = None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def to_json(self) -> str:
        # PSNR of identical inputs serializes as the JSON extension token Infinity
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class MetricsConfig:
    data_range: float | None = None
    ms_ssim_scales: int = 3
    ssim_window: int = SSIM_WINDOW
    nsd_tolerance_mm: float = NSD_TOLERANCE_MM
    hd95_convention: str = "pooled"


def report(pred, gt, masks: Mapping[str, Mask] | None = None, config: MetricsConfig = MetricsConfig()) -> MetricsReport:
    """Compute every metric the inputs allow.

    ``masks`` keys: ``eval`` restricts the intensity metrics; ``pred_seg`` and
    ``gt_seg`` enable dice/hd95/nsd. SSIM terms are omitted when the volume is
    too small for the window or scale count. ``data_range`` defaults to the
    ground-truth dynamic range.
    """
    masks = dict(masks or {})
    eval_mask = masks.get("eval")
    a, b = _arr(pred), _arr(gt)
    data_range = config.data_range
    if data_range is None:
        data_range = float(b.max() - b.min()) or 1.0
    out = MetricsReport()
    out.mae_hu = mae_hu(pred, gt, eval_mask)
    out.mse = mse(pred, gt, eval_mask)
    out.rmse = math.sqrt(out.mse)
    out.psnr_db = psnr(pred, gt, data_range, eval_mask)
    try:
        out.ssim = ssim3(a, b, config.ssim_window, data_range)
    except WindowTooLarge:
        pass
    try:
        out.ms_ssim = ms_ssim3(a, b, config.ms_ssim_scales, data_range, config.ssim_window)
    except TooManyScalesForShape:
        pass
    seg_p, seg_g = masks.get("pred_seg"), masks.get("gt_seg")
    if seg_p is not None and seg_g is not None:
        out.dice = dice(seg_p, seg_g)
        if _bits(seg_p).any() and _bits(seg_g).any():
            out.hd95_mm = hd95(seg_p, seg_g, convention=config.hd95_convention)
            out.nsd = nsd(seg_p, seg_g, config.nsd_tolerance_mm)
    return out


def append_csv(path, row: Mapping[str, object]) -> None:
    """Append ``row`` to a CSV file, writing the header when the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(row))
        if new:
            writer.writeheader()
        writer.writerow(row)
