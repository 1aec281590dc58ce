"""Tiled variable-step sampling: one reverse chain per window, then stitch."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .diffusion import Denoiser, SamplerConfig, make_rng, sample
from .schedule import NoiseSchedule
from .tiler import WindowPlan, extract_array, stitch_array

THREADS_ENV = "VSDDPM_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def sample_windows(
    denoiser: Denoiser,
    conditions: Sequence[np.ndarray] | None,
    plan: WindowPlan,
    cfg: SamplerConfig,
    s: NoiseSchedule,
    threads: int | None = None,
) -> list[np.ndarray]:
    """Sample every window of ``plan``; window k draws from substream ``(cfg.seed, k)``.

    Results do not depend on ``threads``.
    """
    conditions = list(conditions or [])

    def one(k: int) -> np.ndarray:
        cond = [extract_array(c, plan, k) for c in conditions] or None
        return sample(denoiser, cond, plan.R, cfg, s, rng=make_rng(cfg.seed, k))

    threads = default_threads() if threads is None else threads
    if threads <= 1:
        return [one(k) for k in range(len(plan))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(len(plan))))


def tiled_sample(
    denoiser: Denoiser,
    conditions: Sequence[np.ndarray] | None,
    plan: WindowPlan,
    cfg: SamplerConfig,
    s: NoiseSchedule,
    threads: int | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Stitched volume plus the per-window samples it was built from."""
    windows = sample_windows(denoiser, conditions, plan, cfg, s, threads)
    return stitch_array(windows, plan), windows
