"""Budget-aware inference planning.

Given a volume size, a window size, a per-step latency and a wall-clock
budget, pick the largest trained step count that fits and then the largest
window overlap that still fits at that step count.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

from .errors import BudgetInfeasible, InfeasibleAtMinimumOverlap, InvalidOverlap, WindowLargerThanVolume
from .schedule import StepSet, default_step_set

P_MAX = 0.95
MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class HardwareProfile:
    time_per_infer_s: float = 0.433
    total_budget_s: float = 900.0

    def __post_init__(self):
        if not (self.time_per_infer_s > 0 and self.total_budget_s > 0):
            raise ValueError("latency and budget must be positive")


@dataclass(frozen=True)
class BudgetPlan:
    n_windows: int
    t_max_real: float
    t_selected: int
    overlap_final: float
    est_runtime_s: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def overlap_fraction(p: float) -> Fraction:
    """Exact rational for ``p`` as written (0.7 -> 7/10, not the nearest binary float)."""
    return Fraction(repr(float(p)))


def stride(R: int, p: float) -> Fraction:
    return R * (1 - overlap_fraction(p))


def _validate(I: Sequence[int], R: Sequence[int], p: float) -> None:
    if len(I) != 3 or len(R) != 3:
        raise ValueError("I and R must have 3 entries")
    if any(r < 1 for r in R):
        raise ValueError(f"window sizes must be positive: {tuple(R)}")
    if any(r > i for i, r in zip(I, R)):
        raise WindowLargerThanVolume(f"window {tuple(R)} exceeds volume {tuple(I)}")
    if not 0 <= p < 1:
        raise InvalidOverlap(f"overlap must satisfy 0 <= p < 1, got {p}")


def windows_per_axis(I: int, R: int, p: float) -> int:
    return math.ceil(Fraction(I - R) / stride(R, p)) + 1


def n_windows(I: Sequence[int], R: Sequence[int], p: float) -> int:
    """Window count for a sliding window of size R and overlap p over a volume of size I."""
    _validate(I, R, p)
    return math.prod(windows_per_axis(i, r, p) for i, r in zip(I, R))


def max_steps(hw: HardwareProfile, n_windows: int) -> float:
    """Real-valued step bound: budget / (latency * windows)."""
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    return hw.total_budget_s / (hw.time_per_infer_s * n_windows)


def select_steps(t_max: float, steps: StepSet | Sequence[int]) -> int:
    values = tuple(steps)
    if not values:
        raise ValueError("step set is empty")
    fitting = [s for s in values if s <= t_max]
    if not fitting:
        raise BudgetInfeasible(
            f"step bound {t_max:.3f} is below the smallest trained step count {min(values)}"
        )
    return max(fitting)


def overlap_grid(p_min: float = MIN_OVERLAP, p_grid: float = 0.01, p_max: float = P_MAX) -> list[float]:
    n = int(math.floor((p_max - p_min) / p_grid + 1e-9))
    return [round(p_min + k * p_grid, 10) for k in range(n + 1)]


def runtime(n: int, t: int, hw: HardwareProfile) -> float:
    return n * t * hw.time_per_infer_s


def refine_overlap(
    I: Sequence[int],
    R: Sequence[int],
    t_selected: int,
    hw: HardwareProfile,
    p_min: float = MIN_OVERLAP,
    p_grid: float = 0.01,
) -> float:
    """Largest overlap on the grid p_min, p_min + p_grid, ..., 0.95 that fits the budget."""
    if runtime(n_windows(I, R, p_min), t_selected, hw) > hw.total_budget_s:
        raise InfeasibleAtMinimumOverlap(
            f"T={t_selected} does not fit the {hw.total_budget_s} s budget even at overlap {p_min}"
        )
    # the window count never decreases as overlap grows, so stop at the first miss
    best = p_min
    for p in overlap_grid(p_min, p_grid):
        if runtime(n_windows(I, R, p), t_selected, hw) > hw.total_budget_s:
            break
        best = p
    return best


def plan(
    I: Sequence[int],
    R: Sequence[int],
    hw: HardwareProfile = HardwareProfile(),
    steps: StepSet | Sequence[int] | None = None,
    p_init: float = MIN_OVERLAP,
) -> BudgetPlan:
    if p_init < MIN_OVERLAP:
        raise InvalidOverlap(f"initial overlap {p_init} is below the minimum {MIN_OVERLAP}")
    steps = default_step_set() if steps is None else steps
    n0 = n_windows(I, R, p_init)
    t_max = max_steps(hw, n0)
    t_sel = select_steps(t_max, steps)
    p_final = refine_overlap(I, R, t_sel, hw, p_min=p_init)
    n_final = n_windows(I, R, p_final)
    return BudgetPlan(n_final, t_max, t_sel, p_final, runtime(n_final, t_sel, hw))
