"""Linear noise schedules and respacing to arbitrary step counts."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBetaRange, StepCountTooLarge

DEFAULT_STEPS = (5, 10, 15, 20, 25, 35, 50, 75, 100, 125, 150, 175, 200, 225, 250, 275, 300)


@dataclass(frozen=True)
class StepSet:
    values: tuple[int, ...]

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if not vals:
            raise ValueError("step set is empty")
        if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"step set must be strictly increasing positive integers: {vals}")
        object.__setattr__(self, "values", vals)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __contains__(self, t):
        return t in self.values

    @classmethod
    def parse(cls, text: str) -> "StepSet":
        return cls(tuple(int(tok) for tok in text.split(",") if tok.strip()))


def default_step_set() -> StepSet:
    """The 17 step counts a variable-step model is trained to support."""
    return StepSet(DEFAULT_STEPS)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step diffusion quantities for a T-step chain.

    Construct via :func:`linear_base_schedule` or :func:`respace`.
    ``timesteps`` maps each step of this schedule to its index in the base
    schedule it was respaced from (identity for a base schedule).
    """

    alpha_bars: np.ndarray
    timesteps: np.ndarray
    base_T: int
    betas: np.ndarray = field(init=False)
    alphas: np.ndarray = field(init=False)
    alpha_bars_prev: np.ndarray = field(init=False)
    posterior_variance: np.ndarray = field(init=False)
    posterior_mean_coef1: np.ndarray = field(init=False)
    posterior_mean_coef2: np.ndarray = field(init=False)
    log_beta: np.ndarray = field(init=False)
    log_posterior_variance_clipped: np.ndarray = field(init=False)

    def __post_init__(self):
        ab = np.asarray(self.alpha_bars, dtype=np.float64)
        if ab.ndim != 1 or ab.size == 0:
            raise ValueError("alpha_bars must be a non-empty 1-D array")
        if not ((ab > 0) & (ab < 1)).all() or (np.diff(ab) >= 0).any():
            raise ValueError("alpha_bars must be strictly decreasing inside (0, 1)")
        prev = np.append(1.0, ab[:-1])
        betas = 1.0 - ab / prev
        alphas = 1.0 - betas
        post_var = betas * (1.0 - prev) / (1.0 - ab)
        # posterior variance is 0 at t=0; the log uses the t=1 value there
        first = post_var[1] if ab.size > 1 else betas[0]
        values = {
            "alpha_bars": ab,
            "timesteps": np.asarray(self.timesteps, dtype=np.int64),
            "betas": betas,
            "alphas": alphas,
            "alpha_bars_prev": prev,
            "posterior_variance": post_var,
            "posterior_mean_coef1": betas * np.sqrt(prev) / (1.0 - ab),
            "posterior_mean_coef2": (1.0 - prev) * np.sqrt(alphas) / (1.0 - ab),
            "log_beta": np.log(betas),
            "log_posterior_variance_clipped": np.log(np.append(first, post_var[1:])),
        }
        for name, arr in values.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return int(self.alpha_bars.shape[0])

    def normalized_t(self, t: int) -> float:
        """Step index scaled to [0, 1] as seen by the denoiser."""
        return t / self.T if self.T > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "base_T": self.base_T,
            "timesteps": self.timesteps.tolist(),
            "betas": self.betas.tolist(),
            "alpha_bars": self.alpha_bars.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def linear_base_schedule(T_base: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if not (0 < beta_start <= beta_end < 1):
        raise InvalidBetaRange(f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    if T_base < 1:
        raise ValueError("T_base must be positive")
    betas = np.linspace(beta_start, beta_end, int(T_base), dtype=np.float64)
    return NoiseSchedule(np.cumprod(1.0 - betas), np.arange(T_base), int(T_base))


def respaced_indices(base_T: int, T: int) -> np.ndarray:
    """T evenly spaced indices over [0, base_T - 1], always ending at base_T - 1."""
    if T == 1:
        return np.array([base_T - 1], dtype=np.int64)
    return np.floor(np.linspace(0, base_T - 1, T) + 0.5).astype(np.int64)


def respace(base: NoiseSchedule, T: int) -> NoiseSchedule:
    """Shorter schedule whose cumulative alphas equal the base at selected indices."""
    T = int(T)
    if T < 1:
        raise ValueError("T must be positive")
    if T > base.T:
        raise StepCountTooLarge(f"cannot respace a {base.T}-step schedule to {T} steps")
    idx = respaced_indices(base.T, T)
    return NoiseSchedule(base.alpha_bars[idx], base.timesteps[idx], base.base_T)
