"""Loss functionals, the two composite training objectives and the LR schedule.

There is deliberately no Dice loss here.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal

from . import kernels
from .errors import (
    EpochOutOfRange,
    ExtractorShapeMismatch,
    PhaseMismatch,
    ShapeMismatch,
    TooManyScalesForShape,
    WindowTooLarge,
)

K1, K2 = 0.01, 0.03
SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

FeatureExtractor = Callable[[np.ndarray], Sequence[np.ndarray]]


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} != {b.shape}")
    return a, b


def mae(pred, target) -> float:
    a, b = _pair(pred, target)
    return float(np.mean(np.abs(a - b)))


def mse(pred, target) -> float:
    a, b = _pair(pred, target)
    return float(np.mean((a - b) ** 2))


# ---------------------------------------------------------------------------
# SSIM / MS-SSIM
# ---------------------------------------------------------------------------


def gaussian_taps(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _ssim_maps(a, b, window: int, data_range: float, sigma: float = SSIM_SIGMA):
    if window % 2 != 1 or window < 1:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if any(n < window for n in a.shape):
        raise WindowTooLarge(f"window {window} larger than shape {a.shape}")
    taps = gaussian_taps(window, sigma)
    filt = lambda x: kernels.separable_filter_valid(x, taps)  # noqa: E731
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    luminance = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return luminance * cs, cs


def ssim3(pred, target, window: int = SSIM_WINDOW, data_range: float = 2.0) -> float:
    """Mean local 3-D SSIM under a Gaussian window (no padding)."""
    a, b = _pair(pred, target)
    ssim_map, _ = _ssim_maps(a, b, window, data_range)
    return float(ssim_map.mean())


def avg_pool2(x: np.ndarray) -> np.ndarray:
    """2x average pooling per axis; a trailing odd slice is dropped."""
    n0, n1, n2 = (n // 2 * 2 for n in x.shape)
    x = x[:n0, :n1, :n2]
    return x.reshape(n0 // 2, 2, n1 // 2, 2, n2 // 2, 2).mean(axis=(1, 3, 5))


def ms_ssim_weights(scales: int) -> np.ndarray:
    w = np.asarray(MS_SSIM_WEIGHTS[:scales])
    return w / w.sum()


def ms_ssim3(pred, target, scales: int = 3, data_range: float = 2.0, window: int = SSIM_WINDOW) -> float:
    """Multi-scale SSIM: contrast-structure at each coarser scale, full SSIM at the last.

    Standard per-scale exponents truncated to ``scales`` and renormalized to sum
    to one, so ``scales=1`` is plain :func:`ssim3`. Negative per-scale terms are
    clamped to zero before exponentiation.
    """
    a, b = _pair(pred, target)
    if not 1 <= scales <= len(MS_SSIM_WEIGHTS):
        raise TooManyScalesForShape(f"scales must be in [1, {len(MS_SSIM_WEIGHTS)}]")
    need = window * 2 ** (scales - 1)
    if any(n < need for n in a.shape):
        raise TooManyScalesForShape(f"{scales} scales need every dimension >= {need}, got {a.shape}")
    weights = ms_ssim_weights(scales)
    result = 1.0
    for j in range(scales):
        ssim_map, cs = _ssim_maps(a, b, window, data_range)
        term = ssim_map.mean() if j == scales - 1 else cs.mean()
        result *= max(float(term), 0.0) ** weights[j]
        if j < scales - 1:
            a, b = avg_pool2(a), avg_pool2(b)
    return float(result)


# ---------------------------------------------------------------------------
# anatomical-feature loss
# ---------------------------------------------------------------------------


class RandomConvExtractor:
    """Fixed-seed two-layer 3x3x3 conv feature pyramid with ReLU.

    Layer 1 convolves the input; layer 2 convolves a 2x average-pooled copy
    of layer 1. Layer 2 is skipped for inputs too small to host it.
    """

    def __init__(self, seed: int = 0, channels: tuple[int, int] = (4, 8)):
        rng = np.random.default_rng(seed)
        c1, c2 = channels
        self.k1 = rng.standard_normal((c1, 3, 3, 3)) / math.sqrt(27)
        self.k2 = rng.standard_normal((c2, c1, 3, 3, 3)) / math.sqrt(27 * c1)

    def __call__(self, x: np.ndarray) -> list[np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        if any(n < 3 for n in x.shape):
            raise ExtractorShapeMismatch(f"input {x.shape} too small for 3x3x3 filters")
        layer1 = [np.maximum(signal.correlate(x, k, mode="valid", method="direct"), 0.0) for k in self.k1]
        feats = list(layer1)
        pooled = [avg_pool2(f) for f in layer1]
        if all(n >= 3 for n in pooled[0].shape):
            for kc in self.k2:
                acc = sum(signal.correlate(p, k, mode="valid", method="direct") for p, k in zip(pooled, kc))
                feats.append(np.maximum(acc, 0.0))
        return feats


_DEFAULT_EXTRACTOR = RandomConvExtractor()


def afp(pred, target, extractor: FeatureExtractor | None = None) -> float:
    """Mean absolute difference between feature maps, averaged over maps."""
    a, b = _pair(pred, target)
    extractor = _DEFAULT_EXTRACTOR if extractor is None else extractor
    fa, fb = list(extractor(a)), list(extractor(b))
    if not fa or len(fa) != len(fb):
        raise ExtractorShapeMismatch(f"extractor produced {len(fa)} vs {len(fb)} feature maps")
    total = 0.0
    for x, y in zip(fa, fb):
        x, y = np.asarray(x), np.asarray(y)
        if x.shape != y.shape:
            raise ExtractorShapeMismatch(f"feature map shapes differ: {x.shape} vs {y.shape}")
        total += float(np.mean(np.abs(x - y)))
    return total / len(fa)


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------


class Phase(str, enum.Enum):
    BRATS_SINGLE_PHASE = "brats_single_phase"
    SYNTHRAD_PHASE1 = "synthrad_phase1"
    SYNTHRAD_PHASE2 = "synthrad_phase2"


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.001
    lambda2: float = 0.2
    phase: Phase = Phase.BRATS_SINGLE_PHASE
    var_penalty: float = 0.0001

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        if min(self.lambda1, self.lambda2, self.var_penalty) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossReport:
    components: dict[str, float]
    weights: dict[str, float]
    total: float = field(default=0.0)

    @classmethod
    def from_components(cls, components: dict[str, float], weights: dict[str, float]) -> "LossReport":
        if set(components) != set(weights):
            raise ValueError(f"component/weight keys differ: {sorted(components)} vs {sorted(weights)}")
        total = math.fsum(weights[k] * components[k] for k in components)
        return cls(dict(components), dict(weights), total)

    def to_dict(self) -> dict:
        return {"components": self.components, "weights": self.weights, "total": self.total}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def brats_weights(w: LossWeights) -> dict[str, float]:
    return {"mae": 1.0, "mse": 1.0, "ssim_loss": 1.0, "vlb": w.lambda1}


def synthrad_weights(w: LossWeights) -> dict[str, float]:
    if w.phase is Phase.SYNTHRAD_PHASE1:
        return {"mae": 1.0, "var_penalty": w.var_penalty, "vlb": w.lambda1}
    if w.phase is Phase.SYNTHRAD_PHASE2:
        return {"mae": 1.0, "afp": w.lambda2, "vlb": w.lambda1}
    raise PhaseMismatch(f"phase {w.phase.value} is not a SynthRAD phase")


def composite_brats(pred, target, vlb: float, w: LossWeights = LossWeights(), data_range: float = 2.0,
                    window: int = SSIM_WINDOW) -> LossReport:
    """MAE + MSE + (1 - SSIM) + lambda1 * VLB."""
    if w.phase is not Phase.BRATS_SINGLE_PHASE:
        raise PhaseMismatch(f"composite_brats needs phase brats_single_phase, got {w.phase.value}")
    comps = {
        "mae": mae(pred, target),
        "mse": mse(pred, target),
        "ssim_loss": 1.0 - ssim3(pred, target, window, data_range),
        "vlb": float(vlb),
    }
    return LossReport.from_components(comps, brats_weights(w))


def composite_synthrad(pred, target, vlb: float, v_raw, w: LossWeights,
                       extractor: FeatureExtractor | None = None) -> LossReport:
    """Phase 1: MAE + 1e-4 * mean(v_raw^2) + lambda1 * VLB.
    Phase 2: MAE + 0.2 * AFP + lambda1 * VLB.
    """
    weights = synthrad_weights(w)
    comps = {"mae": mae(pred, target), "vlb": float(vlb)}
    if w.phase is Phase.SYNTHRAD_PHASE1:
        comps["var_penalty"] = float(np.mean(np.square(np.asarray(v_raw, dtype=np.float64))))
    else:
        comps["afp"] = afp(pred, target, extractor)
    return LossReport.from_components(comps, weights)


def cosine_lr(epoch: int, total_epochs: int, lr0: float = 2e-5, lr_min: float = 1e-6) -> float:
    if total_epochs < 1 or not 0 <= epoch <= total_epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {total_epochs}]")
    if epoch == 0:
        return lr0
    if epoch == total_epochs:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * epoch / total_epochs))
