"""Intensity pipelines for CT/CBCT and MRI, their inverses and the post-processing floor."""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainMismatch, EmptyStatsRegion, MissingGlobalStats, StatsMismatch, ZeroStd
from .volume_io import Domain, Mask, Volume

HU_MIN = -1000.0
HU_MAX = 1600.0
MRI_PERCENTILES = (0.1, 99.9)


class NormMode(str, enum.Enum):
    CT = "ct"
    MRI_GLOBAL = "mri_global"
    MRI_PER_CASE = "mri_per_case"
    MRI_NONZERO_MASKED = "mri_nonzero_masked"


@dataclass(frozen=True)
class NormStats:
    clip_lo: float
    clip_hi: float
    mean: float
    std: float
    post_min: float
    post_max: float
    mode: NormMode

    def __post_init__(self):
        object.__setattr__(self, "mode", NormMode(self.mode))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(**{k: d[k] for k in ("clip_lo", "clip_hi", "mean", "std", "post_min", "post_max", "mode")})

    @classmethod
    def from_json(cls, text: str) -> "NormStats":
        return cls.from_dict(json.loads(text))


def _require(v: Volume, domain: Domain) -> None:
    if v.domain is not domain:
        raise DomainMismatch(f"expected a {domain.value} volume, got {v.domain.value}")


def ct_normalize(v: Volume) -> tuple[Volume, NormStats]:
    """Clip HU to [-1000, 1600] and map linearly onto [-1, 1]."""
    _require(v, Domain.HU)
    x = np.clip(v.data, HU_MIN, HU_MAX)
    y = 2.0 * (x - HU_MIN) / (HU_MAX - HU_MIN) - 1.0
    stats = NormStats(HU_MIN, HU_MAX, 0.0, 1.0, -1.0, 1.0, NormMode.CT)
    return v.with_data(y, Domain.NORM_SYM), stats


def ct_denormalize(v: Volume) -> Volume:
    _require(v, Domain.NORM_SYM)
    x = (v.data + 1.0) / 2.0 * (HU_MAX - HU_MIN) + HU_MIN
    return v.with_data(x, Domain.HU)


def percentile_linear(values: np.ndarray, q: float) -> float:
    """q-th percentile (0..100) interpolating linearly between order statistics.

    Uses partial selection of the two bracketing ranks instead of a full sort.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("percentile of an empty array")
    pos = (x.size - 1) * q / 100.0
    lo = int(np.floor(pos))
    hi = min(lo + 1, x.size - 1)
    part = np.partition(x, (lo, hi))
    frac = pos - lo
    return float(part[lo] + frac * (part[hi] - part[lo]))


def _stats_region(v: Volume, mode: NormMode, region: Mask | None) -> np.ndarray:
    if mode is NormMode.MRI_NONZERO_MASKED:
        sel = v.data != 0
        if region is not None:
            if region.shape != v.shape:
                raise EmptyStatsRegion(f"region shape {region.shape} != volume shape {v.shape}")
            sel &= region.bits
        if not sel.any():
            raise EmptyStatsRegion("no non-zero voxels inside the statistics region")
        return v.data[sel]
    return v.data.ravel()


def mri_normalize(
    v: Volume,
    mode: NormMode | str = NormMode.MRI_PER_CASE,
    external_stats: NormStats | None = None,
    region: Mask | None = None,
) -> tuple[Volume, NormStats]:
    """Percentile clip (0.1 / 99.9), z-score, then map observed min/max onto [-1, 1].

    ``mri_per_case`` computes mean/std on this volume; ``mri_global`` takes
    them from ``external_stats`` (how those were aggregated is up to the
    caller); ``mri_nonzero_masked`` uses the non-zero voxels inside
    ``region`` (for example the scan with the lesion excluded), and also
    takes the clip percentiles from that voxel set.
    """
    _require(v, Domain.MRI_RAW)
    mode = NormMode(mode)
    if mode is NormMode.CT:
        raise DomainMismatch("use ct_normalize for CT volumes")
    ref = _stats_region(v, mode, region)
    lo = percentile_linear(ref, MRI_PERCENTILES[0])
    hi = percentile_linear(ref, MRI_PERCENTILES[1])
    x = np.clip(v.data, lo, hi)
    if mode is NormMode.MRI_GLOBAL:
        if external_stats is None:
            raise MissingGlobalStats("mri_global mode needs externally computed mean/std")
        mean, std = float(external_stats.mean), float(external_stats.std)
    else:
        ref_clipped = np.clip(ref, lo, hi)
        mean, std = float(ref_clipped.mean()), float(ref_clipped.std())
    if not std > 0:
        raise ZeroStd("standard deviation is zero; cannot z-score")
    z = (x - mean) / std
    zmin, zmax = float(z.min()), float(z.max())
    if not zmax > zmin:
        raise ZeroStd("volume is constant after clipping")
    y = np.clip(2.0 * (z - zmin) / (zmax - zmin) - 1.0, -1.0, 1.0)
    stats = NormStats(lo, hi, mean, std, zmin, zmax, mode)
    return v.with_data(y, Domain.NORM_SYM), stats


def mri_denormalize(v: Volume, stats: NormStats) -> Volume:
    _require(v, Domain.NORM_SYM)
    if stats.mode is NormMode.CT or not stats.std > 0 or not stats.post_max > stats.post_min:
        raise StatsMismatch(f"stats cannot invert an MRI normalization: {stats}")
    z = (v.data + 1.0) / 2.0 * (stats.post_max - stats.post_min) + stats.post_min
    return v.with_data(z * stats.std + stats.mean, Domain.MRI_RAW)


def postprocess_floor(v: Volume, threshold: float = 0.01) -> Volume:
    """Zero out values below ``threshold`` in a [0, 1] volume."""
    _require(v, Domain.NORM_UNIT)
    return v.with_data(np.where(v.data < threshold, 0.0, v.data))
