"""Seedable, shape-preserving 3-D augmentations.

Geometric transforms resample trilinearly about the volume centre and fill
out-of-volume samples with the volume minimum.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import AngleOutOfRange, FactorOutOfRange, NegativeSigma, OrderTooHigh
from .volume_io import Domain, Volume

_BOUNDED = {Domain.NORM_SYM: (-1.0, 1.0), Domain.NORM_UNIT: (0.0, 1.0)}


@dataclass(frozen=True)
class AugmentConfig:
    rotation_deg: float = 3.0
    scale_range: tuple[float, float] = (0.95, 1.05)
    shear_max: float = 0.05
    intensity_shift_max: float = 0.05
    noise_sigma: float = 0.01
    smooth_sigma: float = 0.5
    bias_field_order: int = 2
    bias_field_amp: float = 0.1
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if self.rotation_deg < 0 or not 0 < lo <= hi:
            raise ValueError("rotation_deg must be >= 0 and scale_range positive and ordered")
        if min(self.noise_sigma, self.smooth_sigma, self.shear_max, self.intensity_shift_max, self.bias_field_amp) < 0:
            raise NegativeSigma("augmentation magnitudes must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        if "scale_range" in d:
            d["scale_range"] = tuple(d["scale_range"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _resample(v: Volume, forward: np.ndarray) -> Volume:
    """Apply ``forward`` (3x3, output = forward @ (source - c) + c) by inverse mapping."""
    centre = (np.asarray(v.shape, dtype=np.float64) - 1.0) / 2.0
    inv = np.linalg.inv(forward)
    off = centre - inv @ centre
    fill = float(v.data.min())
    return v.with_data(kernels.affine_resample(v.data, inv, off, fill))


def rotation_matrix(angles_deg: Sequence[float]) -> np.ndarray:
    a, b, c = (math.radians(x) for x in angles_deg)
    rx = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    rz = np.array([[math.cos(c), -math.sin(c), 0], [math.sin(c), math.cos(c), 0], [0, 0, 1]])
    return rz @ ry @ rx


def rotate(v: Volume, angles_deg: Sequence[float], max_deg: float = 3.0) -> Volume:
    """Rotate by the given per-axis angles (degrees), each bounded by ``max_deg``."""
    if any(abs(x) > max_deg for x in angles_deg):
        raise AngleOutOfRange(f"angles {tuple(angles_deg)} exceed +/-{max_deg} deg")
    if all(x == 0 for x in angles_deg):
        return v.with_data(v.data)
    return _resample(v, rotation_matrix(angles_deg))


def scale(v: Volume, factors: Sequence[float], bounds: tuple[float, float] = (0.5, 2.0)) -> Volume:
    """Zoom about the centre; factor 2 doubles apparent size."""
    if any(not bounds[0] <= f <= bounds[1] for f in factors):
        raise FactorOutOfRange(f"scale factors {tuple(factors)} outside {bounds}")
    return _resample(v, np.diag(np.asarray(factors, dtype=np.float64)))


def shear(v: Volume, amounts: Sequence[float], max_shear: float = 0.5) -> Volume:
    """Shear with (s01, s02, s12) placed in the upper triangle of the transform."""
    if any(abs(s) > max_shear for s in amounts):
        raise FactorOutOfRange(f"shear {tuple(amounts)} exceeds +/-{max_shear}")
    s01, s02, s12 = amounts
    m = np.array([[1.0, s01, s02], [0.0, 1.0, s12], [0.0, 0.0, 1.0]])
    return _resample(v, m)


def intensity_shift(v: Volume, delta: float) -> Volume:
    return v.with_data(v.data + delta)


def gaussian_noise(v: Volume, sigma: float, rng: np.random.Generator) -> Volume:
    if sigma < 0:
        raise NegativeSigma(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return v.with_data(v.data)
    return v.with_data(v.data + sigma * rng.standard_normal(v.shape))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_smooth(v: Volume, sigma: float) -> Volume:
    """Separable Gaussian blur (radius 3 sigma, edge-replicated borders)."""
    if sigma < 0:
        raise NegativeSigma(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return v.with_data(v.data)
    w = gaussian_kernel(sigma)
    r = w.size // 2
    padded = np.pad(v.data, r, mode="edge")
    return v.with_data(kernels.separable_filter_valid(padded, w))


def _monomials(order: int):
    return [e for e in itertools.product(range(order + 1), repeat=3) if sum(e) <= order]


def bias_field(v: Volume, order: int, amplitude: float, rng: np.random.Generator) -> Volume:
    """Multiply by exp(P) for a random polynomial P with max |P| equal to ``amplitude``."""
    if order > 3:
        raise OrderTooHigh(f"bias field order {order} > 3")
    if order < 0 or amplitude < 0:
        raise ValueError("order and amplitude must be non-negative")
    coeffs = rng.standard_normal(len(_monomials(order)))
    if amplitude == 0:
        return v.with_data(v.data)
    axes = [np.linspace(-1.0, 1.0, n) for n in v.shape]
    x, y, z = np.meshgrid(*axes, indexing="ij")
    poly = np.zeros(v.shape)
    for c, (i, j, k) in zip(coeffs, _monomials(order)):
        poly += c * x**i * y**j * z**k
    peak = np.abs(poly).max()
    if peak > 0:
        poly *= amplitude / peak
    return v.with_data(v.data * np.exp(poly))


def augment(v: Volume, cfg: AugmentConfig, rng: np.random.Generator | None = None) -> Volume:
    """Draw one random instance of every transform from ``cfg`` and apply it."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    domain = v.domain
    # bounded domains are restored by clipping once all transforms are applied
    v = Volume(v.data, v.spacing, Domain.MRI_RAW if domain in _BOUNDED else domain)
    angles = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg, 3)
    factors = rng.uniform(cfg.scale_range[0], cfg.scale_range[1], 3)
    shears = rng.uniform(-cfg.shear_max, cfg.shear_max, 3)
    delta = rng.uniform(-cfg.intensity_shift_max, cfg.intensity_shift_max)
    out = rotate(v, angles, max_deg=max(cfg.rotation_deg, 1e-12))
    out = scale(out, factors, bounds=(min(0.5, cfg.scale_range[0]), max(2.0, cfg.scale_range[1])))
    out = shear(out, shears, max_shear=max(0.5, cfg.shear_max))
    out = bias_field(out, cfg.bias_field_order, cfg.bias_field_amp, rng)
    out = gaussian_smooth(out, cfg.smooth_sigma)
    out = intensity_shift(out, delta)
    out = gaussian_noise(out, cfg.noise_sigma, rng)
    if domain in _BOUNDED:
        lo, hi = _BOUNDED[domain]
        out = Volume(np.clip(out.data, lo, hi), out.spacing, domain)
    return out
