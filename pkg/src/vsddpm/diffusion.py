"""Forward process, posterior, learned-variance reverse step, sampling loop and VLB.

Random numbers come from :func:`make_rng`: numpy's PCG64 seeded through a
``SeedSequence`` whose spawn key is the stream id (for example a window
index). Substreams for different ids are statistically independent and
reproducible regardless of execution order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatch, StepOutOfRange
from .schedule import NoiseSchedule


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator for ``seed`` and an optional substream path."""
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ModelOutput:
    eps_hat: np.ndarray
    v_raw: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.eps_hat, dtype=np.float64)
        v = np.broadcast_to(np.clip(np.asarray(self.v_raw, dtype=np.float64), -1.0, 1.0), eps.shape)
        object.__setattr__(self, "eps_hat", eps)
        object.__setattr__(self, "v_raw", v)


# (x_t, t_norm, t_index, schedule, condition) -> ModelOutput
Denoiser = Callable[[np.ndarray, float, int, NoiseSchedule, "Sequence[np.ndarray] | None"], ModelOutput]


@dataclass(frozen=True)
class SamplerConfig:
    T: int
    clip_denoised: bool = True
    clip_range: tuple[float, float] = (-1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be positive")
        if not self.clip_range[0] < self.clip_range[1]:
            raise ValueError("clip_range must satisfy lo < hi")


def _check_t(t: int, s: NoiseSchedule) -> int:
    t = int(t)
    if not 0 <= t < s.T:
        raise StepOutOfRange(f"step {t} outside [0, {s.T})")
    return t


def _same_shape(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ShapeMismatch(f"shape {np.shape(a)} != {shape}")


def q_sample(x0, t: int, noise, s: NoiseSchedule) -> np.ndarray:
    _same_shape(x0, noise)
    t = _check_t(t, s)
    ab = s.alpha_bars[t]
    return math.sqrt(ab) * np.asarray(x0, np.float64) + math.sqrt(1.0 - ab) * np.asarray(noise, np.float64)


def posterior(x0, x_t, t: int, s: NoiseSchedule) -> tuple[np.ndarray, float]:
    """Mean and variance of q(x_{t-1} | x_t, x_0)."""
    _same_shape(x0, x_t)
    t = _check_t(t, s)
    mean = s.posterior_mean_coef1[t] * np.asarray(x0, np.float64) + s.posterior_mean_coef2[t] * np.asarray(x_t, np.float64)
    return mean, float(s.posterior_variance[t])


def predict_x0_from_eps(x_t, t: int, eps_hat, s: NoiseSchedule, clip: tuple[float, float] | None = None) -> np.ndarray:
    _same_shape(x_t, eps_hat)
    t = _check_t(t, s)
    ab = s.alpha_bars[t]
    x0 = (np.asarray(x_t, np.float64) - math.sqrt(1.0 - ab) * np.asarray(eps_hat, np.float64)) / math.sqrt(ab)
    if clip is not None:
        x0 = np.clip(x0, clip[0], clip[1])
    return x0


def model_variance(v_raw, t: int, s: NoiseSchedule) -> np.ndarray:
    """Log-variance interpolated between the clipped posterior variance (v=-1) and beta_t (v=+1)."""
    t = _check_t(t, s)
    frac = (np.clip(np.asarray(v_raw, np.float64), -1.0, 1.0) + 1.0) / 2.0
    return frac * s.log_beta[t] + (1.0 - frac) * s.log_posterior_variance_clipped[t]


def p_mean_logvar(out: ModelOutput, x_t, t: int, s: NoiseSchedule, clip=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Model mean, model log-variance and predicted x0 for one reverse step."""
    _same_shape(x_t, out.eps_hat)
    x0_hat = predict_x0_from_eps(x_t, t, out.eps_hat, s, clip)
    mean, _ = posterior(x0_hat, x_t, t, s)
    return mean, model_variance(out.v_raw, t, s), x0_hat


def p_sample_step(out: ModelOutput, x_t, t: int, s: NoiseSchedule, rng: np.random.Generator, cfg: SamplerConfig) -> np.ndarray:
    clip = cfg.clip_range if cfg.clip_denoised else None
    mean, logvar, _ = p_mean_logvar(out, x_t, t, s, clip)
    if t == 0:
        return mean
    z = rng.standard_normal(np.shape(x_t))
    return mean + np.exp(0.5 * logvar) * z


def sample(
    denoiser: Denoiser,
    condition: Sequence[np.ndarray] | None,
    shape: Sequence[int],
    cfg: SamplerConfig,
    s: NoiseSchedule,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Run the reverse chain from pure noise for t = T-1 ... 0.

    ``rng`` defaults to ``make_rng(cfg.seed)``; pass a substream generator
    when sampling many windows.
    """
    if cfg.T != s.T:
        raise ValueError(f"config T={cfg.T} does not match schedule T={s.T}")
    shape = tuple(int(n) for n in shape)
    if condition is not None:
        for c in condition:
            if np.shape(c) != shape:
                raise ShapeMismatch(f"condition shape {np.shape(c)} != sample shape {shape}")
    if rng is None:
        rng = make_rng(cfg.seed)
    x = rng.standard_normal(shape)
    for t in range(s.T - 1, -1, -1):
        out = denoiser(x, s.normalized_t(t), t, s, condition)
        if out.eps_hat.shape != shape:
            raise ShapeMismatch(f"denoiser returned {out.eps_hat.shape}, expected {shape}")
        x = p_sample_step(out, x, t, s, rng, cfg)
    return x


def normal_kl(mean1, logvar1, mean2, logvar2) -> np.ndarray:
    """Elementwise KL(N(mean1, e^logvar1) || N(mean2, e^logvar2)) in nats."""
    return 0.5 * (
        -1.0 + logvar2 - logvar1 + np.exp(logvar1 - logvar2)
        + (np.asarray(mean1) - np.asarray(mean2)) ** 2 * np.exp(-logvar2)
    )


def gaussian_nll(x, mean, logvar) -> np.ndarray:
    """Elementwise negative log-density of x under N(mean, e^logvar) in nats."""
    return 0.5 * (math.log(2.0 * math.pi) + logvar + (np.asarray(x) - mean) ** 2 * np.exp(-logvar))


def vlb_term(x0, x_t, t: int, out: ModelOutput, s: NoiseSchedule, clip=None) -> float:
    """Per-element variational bound term (nats).

    t > 0: KL between the true posterior and the model Gaussian.
    t = 0: continuous Gaussian negative log-likelihood of x0 under the model.
    """
    _same_shape(x0, x_t, out.eps_hat)
    t = _check_t(t, s)
    mean_p, logvar_p, _ = p_mean_logvar(out, x_t, t, s, clip)
    if t == 0:
        return float(np.mean(gaussian_nll(x0, mean_p, logvar_p)))
    mean_q, _ = posterior(x0, x_t, t, s)
    logvar_q = s.log_posterior_variance_clipped[t]
    return float(np.mean(normal_kl(mean_q, logvar_q, mean_p, logvar_p)))
