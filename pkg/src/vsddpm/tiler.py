"""Sliding-window decomposition, weighted stitching and random patch sampling.

Offsets along each axis step by ``floor(k * R * (1 - p))``; the last window
is clamped flush with the far boundary, so the per-axis count matches
:func:`vsddpm.planner.windows_per_axis` and no padding is needed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import CountMismatch, IndexOutOfRange, ShapeMismatch, WindowLargerThanVolume
from .planner import _validate, stride, windows_per_axis
from .volume_io import Domain, Volume

TAPER_FLOOR = 0.01


class WeightMode(str, enum.Enum):
    UNIFORM = "uniform"
    COSINE_TAPER = "cosine_taper"


@dataclass(frozen=True)
class WindowPlan:
    I: tuple[int, int, int]
    R: tuple[int, int, int]
    p: float
    offsets: tuple[tuple[int, int, int], ...]
    weight_mode: WeightMode = WeightMode.COSINE_TAPER

    def __len__(self):
        return len(self.offsets)

    def offsets_array(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=np.int64).reshape(-1, 3)

    def coverage(self) -> np.ndarray:
        """Number of windows covering each voxel."""
        cov = np.zeros(self.I, dtype=np.int64)
        r0, r1, r2 = self.R
        for o0, o1, o2 in self.offsets:
            cov[o0:o0 + r0, o1:o1 + r1, o2:o2 + r2] += 1
        return cov

    def to_dict(self, with_coverage: bool = True) -> dict:
        out = {
            "shape": list(self.I),
            "window": list(self.R),
            "overlap": self.p,
            "weight_mode": self.weight_mode.value,
            "n_windows": len(self.offsets),
            "windows_per_axis": [windows_per_axis(i, r, self.p) for i, r in zip(self.I, self.R)],
            "offsets": [list(o) for o in self.offsets],
        }
        if with_coverage:
            cov = self.coverage()
            out["coverage"] = {"min": int(cov.min()), "max": int(cov.max()), "mean": float(cov.mean())}
        return out


def axis_offsets(I: int, R: int, p: float) -> list[int]:
    n = windows_per_axis(I, R, p)
    step = stride(R, p)
    offs = [min(math.floor(k * step), I - R) for k in range(n - 1)]
    offs.append(I - R)
    return offs


def make_plan(I: Sequence[int], R: Sequence[int], p: float, weight_mode: WeightMode | str = WeightMode.COSINE_TAPER) -> WindowPlan:
    I = tuple(int(v) for v in I)
    R = tuple(int(v) for v in R)
    _validate(I, R, p)
    per_axis = [axis_offsets(i, r, p) for i, r in zip(I, R)]
    offsets = tuple((a, b, c) for a in per_axis[0] for b in per_axis[1] for c in per_axis[2])
    return WindowPlan(I, R, float(p), offsets, WeightMode(weight_mode))


def _check_k(plan: WindowPlan, k: int) -> tuple[int, int, int]:
    if not 0 <= k < len(plan.offsets):
        raise IndexOutOfRange(f"window {k} outside [0, {len(plan.offsets)})")
    return plan.offsets[k]


def extract_array(data: np.ndarray, plan: WindowPlan, k: int) -> np.ndarray:
    o0, o1, o2 = _check_k(plan, k)
    r0, r1, r2 = plan.R
    return np.array(data[o0:o0 + r0, o1:o1 + r1, o2:o2 + r2], dtype=np.float64)


def extract(v: Volume, plan: WindowPlan, k: int) -> np.ndarray:
    if tuple(v.shape) != plan.I:
        raise ShapeMismatch(f"volume {v.shape} does not match plan {plan.I}")
    return extract_array(v.data, plan, k)


def taper_1d(n: int, floor: float = TAPER_FLOOR) -> np.ndarray:
    """Raised cosine peaking at the window centre, floored at ``floor``."""
    x = (np.arange(n) + 0.5) / n
    return np.maximum(0.5 * (1.0 - np.cos(2.0 * np.pi * x)), floor)


def window_weights(R: Sequence[int], mode: WeightMode | str) -> np.ndarray:
    if WeightMode(mode) is WeightMode.UNIFORM:
        return np.ones(tuple(R))
    w0, w1, w2 = (taper_1d(r) for r in R)
    return w0[:, None, None] * w1[None, :, None] * w2[None, None, :]


def stitch_array(outputs: Sequence[np.ndarray], plan: WindowPlan) -> np.ndarray:
    if len(outputs) != len(plan.offsets):
        raise CountMismatch(f"{len(outputs)} outputs for {len(plan.offsets)} windows")
    stack = np.asarray(outputs, dtype=np.float64)
    if stack.shape[1:] != plan.R:
        raise ShapeMismatch(f"window outputs shaped {stack.shape[1:]}, expected {plan.R}")
    # blend deviations from one covering window so that agreeing windows stitch exactly
    ref = np.zeros(plan.I)
    r0, r1, r2 = plan.R
    for (o0, o1, o2), out in zip(plan.offsets, stack):
        ref[o0:o0 + r0, o1:o1 + r1, o2:o2 + r2] = out
    deltas = np.stack([out - ref[o0:o0 + r0, o1:o1 + r1, o2:o2 + r2]
                       for (o0, o1, o2), out in zip(plan.offsets, stack)])
    acc = np.zeros(plan.I)
    wsum = np.zeros(plan.I)
    kernels.accumulate_windows(acc, wsum, deltas, plan.offsets_array(), window_weights(plan.R, plan.weight_mode))
    if not (wsum > 0).all():
        raise CountMismatch("some voxels are not covered by any window")
    return ref + acc / wsum


def stitch(
    outputs: Sequence[np.ndarray],
    plan: WindowPlan,
    I: Sequence[int] | None = None,
    spacing=(1.0, 1.0, 1.0),
    domain: Domain | str = Domain.MRI_RAW,
) -> Volume:
    """Per-voxel weighted average of window outputs."""
    if I is not None and tuple(I) != plan.I:
        raise ShapeMismatch(f"requested shape {tuple(I)} does not match plan {plan.I}")
    return Volume(stitch_array(outputs, plan), spacing, domain)


def sample_patch_array(data: np.ndarray, R: Sequence[int], rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, int, int]]:
    shape = np.shape(data)
    R = tuple(int(r) for r in R)
    if len(R) != 3 or any(r > n or r < 1 for r, n in zip(R, shape)):
        raise WindowLargerThanVolume(f"patch {R} does not fit in {shape}")
    origin = tuple(int(rng.integers(0, n - r + 1)) for n, r in zip(shape, R))
    o0, o1, o2 = origin
    return np.array(data[o0:o0 + R[0], o1:o1 + R[1], o2:o2 + R[2]], dtype=np.float64), origin


def sample_patch(v: Volume, R: Sequence[int], rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Patch at a uniformly random valid origin, plus that origin."""
    return sample_patch_array(v.data, R, rng)
