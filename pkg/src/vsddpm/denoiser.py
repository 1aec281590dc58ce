"""Desk-scale denoisers satisfying the sampler's denoiser contract.

A denoiser is any callable ``(x_t, t_norm, t_index, schedule, condition) ->
ModelOutput``. Two closed-form implementations live here:

* :class:`GaussianAnalyticDenoiser` returns the exact posterior noise
  prediction and reverse variance when x0 is i.i.d. N(mu, sigma^2);
* :class:`LinearDenoiser` is a per-step affine map fitted by least squares.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffusion import ModelOutput
from .errors import DegenerateDesign, StepOutOfRange
from .schedule import NoiseSchedule


def _variance_to_v_raw(logvar_target, t: int, s: NoiseSchedule):
    lo = s.log_posterior_variance_clipped[t]
    hi = s.log_beta[t]
    if hi == lo:
        return np.zeros_like(logvar_target)
    return np.clip(2.0 * (logvar_target - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def gaussian_x0_posterior(x_t, t: int, s: NoiseSchedule, mu, sigma: float) -> tuple[np.ndarray, float]:
    """Mean and variance of x0 given x_t when x0 ~ N(mu, sigma^2) elementwise."""
    ab = s.alpha_bars[t]
    denom = ab * sigma**2 + 1.0 - ab
    gain = math.sqrt(ab) * sigma**2 / denom
    mean = mu + gain * (np.asarray(x_t, np.float64) - math.sqrt(ab) * mu)
    return mean, sigma**2 * (1.0 - ab) / denom


def gaussian_eps(x_t, t_index: int, s: NoiseSchedule, mu, sigma: float) -> ModelOutput:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not 0 <= t_index < s.T:
        raise StepOutOfRange(f"step {t_index} outside [0, {s.T})")
    x_t = np.asarray(x_t, np.float64)
    ab = s.alpha_bars[t_index]
    x0_hat, x0_var = gaussian_x0_posterior(x_t, t_index, s, mu, sigma)
    eps = (x_t - math.sqrt(ab) * x0_hat) / math.sqrt(1.0 - ab)
    # exact reverse variance: posterior variance plus propagated uncertainty in x0
    target = s.posterior_variance[t_index] + s.posterior_mean_coef1[t_index] ** 2 * x0_var
    v = _variance_to_v_raw(np.full(x_t.shape, math.log(target)), t_index, s)
    return ModelOutput(eps, v)


@dataclass(frozen=True)
class GaussianAnalyticDenoiser:
    """Exact denoiser for x0 ~ N(mu, sigma^2).

    With ``mu_from_condition`` the prior mean is read from ``condition[0]``
    each call, which makes it a conditional denoiser.
    """

    mu: float | np.ndarray = 0.0
    sigma: float = 1.0
    mu_from_condition: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def __call__(self, x_t, t_norm, t_index, schedule, condition=None) -> ModelOutput:
        mu = self.mu
        if self.mu_from_condition:
            if not condition:
                raise ValueError("conditional denoiser called without a condition")
            mu = np.asarray(condition[0], np.float64)
        return gaussian_eps(x_t, t_index, schedule, mu, self.sigma)


@dataclass(frozen=True)
class LinearDenoiser:
    a: np.ndarray
    b: np.ndarray
    v_raw: float = 0.0
    train_mse: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.asarray(self.a, np.float64)
        b = np.asarray(self.b, np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("coefficient tables must be 1-D and equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def T(self) -> int:
        return int(self.a.shape[0])

    def __call__(self, x_t, t_norm, t_index, schedule, condition=None) -> ModelOutput:
        if schedule.T != self.T:
            raise ValueError(f"denoiser fitted for T={self.T}, schedule has T={schedule.T}")
        if not 0 <= t_index < self.T:
            raise StepOutOfRange(f"step {t_index} outside [0, {self.T})")
        x_t = np.asarray(x_t, np.float64)
        return ModelOutput(self.a[t_index] * x_t + self.b[t_index], np.full(x_t.shape, self.v_raw))

    def to_dict(self) -> dict:
        out = {"T": self.T, "a": self.a.tolist(), "b": self.b.tolist(), "v_raw": self.v_raw}
        if self.train_mse is not None:
            out["train_mse"] = np.asarray(self.train_mse).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearDenoiser":
        mse = d.get("train_mse")
        return cls(np.asarray(d["a"]), np.asarray(d["b"]), float(d.get("v_raw", 0.0)),
                   None if mse is None else np.asarray(mse))

    @classmethod
    def from_json(cls, text: str) -> "LinearDenoiser":
        return cls.from_dict(json.loads(text))


def simulate_training_pairs(
    dataset: Sequence[np.ndarray],
    s: NoiseSchedule,
    t: int,
    rng: np.random.Generator,
    patch_size: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Flattened (x_t, eps) pairs: one noise draw per dataset grid (or random patch of it)."""
    from .tiler import sample_patch_array

    ab = s.alpha_bars[t]
    xs, es = [], []
    for grid in dataset:
        x0 = np.asarray(grid, np.float64)
        if patch_size is not None:
            x0, _ = sample_patch_array(x0, patch_size, rng)
        eps = rng.standard_normal(x0.shape)
        xs.append((math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps).ravel())
        es.append(eps.ravel())
    return np.concatenate(xs), np.concatenate(es)


def least_squares_affine(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and intercept minimizing mean (y - a x - b)^2."""
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx <= 0.0:
        raise DegenerateDesign("x_t has zero variance; slope is undetermined")
    a = float(dx @ (y - ym)) / sxx
    return a, float(ym - a * xm)


def fit_linear_denoiser(
    dataset: Sequence[np.ndarray],
    s: NoiseSchedule,
    rng: np.random.Generator,
    patch_size: Sequence[int] | None = None,
) -> LinearDenoiser:
    """Fit eps_hat = a_t x_t + b_t per step on simulated noisy copies of ``dataset``.

    ``patch_size`` trains on one random patch per grid per step; no default
    patch size is implied.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    a = np.empty(s.T)
    b = np.empty(s.T)
    mse = np.empty(s.T)
    for t in range(s.T):
        x, eps = simulate_training_pairs(dataset, s, t, rng, patch_size)
        a[t], b[t] = least_squares_affine(x, eps)
        mse[t] = np.mean((eps - a[t] * x - b[t]) ** 2)
    return LinearDenoiser(a, b, 0.0, mse)
