import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from vsddpm.errors import BudgetInfeasible, InfeasibleAtMinimumOverlap, InvalidOverlap, WindowLargerThanVolume
from vsddpm.planner import (
    HardwareProfile,
    max_steps,
    n_windows,
    plan,
    refine_overlap,
    runtime,
    select_steps,
)
from vsddpm.schedule import default_step_set

HW = HardwareProfile(0.433, 900.0)
I0, R0 = (256, 256, 128), (128, 128, 32)


def _count_by_placement(I, R, p):
    # walk window starts until one reaches the far edge
    step = R * (1 - Fraction(str(p)))
    start, count = Fraction(0), 1
    while start + R < I:
        start += step
        count += 1
    return count


def test_single_window():
    assert n_windows((40, 30, 20), (40, 30, 20), 0.8) == 1


def test_reference_count():
    assert n_windows(I0, R0, 0.5) == 63


def test_step_bound():
    assert max_steps(HW, 63) == pytest.approx(32.99, abs=0.01)
    assert max_steps(HW, 1) == pytest.approx(2078.5, abs=0.1)


def test_select_steps():
    steps = default_step_set()
    assert select_steps(32.99, steps) == 25
    assert select_steps(2078.5, steps) == 300
    assert select_steps(5.0, steps) == 5
    with pytest.raises(BudgetInfeasible):
        select_steps(4.99, steps)


def test_refine_overlap():
    assert refine_overlap(I0, R0, 25, HW) == 0.5
    assert n_windows(I0, R0, 0.51) == 128
    assert refine_overlap((64,) * 3, (64,) * 3, 300, HW) == 0.95
    with pytest.raises(InfeasibleAtMinimumOverlap):
        refine_overlap(I0, R0, 35, HW)


def test_refine_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(30):
        R = tuple(int(r) for r in rng.integers(8, 33, 3))
        I = tuple(int(r + d) for r, d in zip(R, rng.integers(0, 64, 3)))
        hw = HardwareProfile(0.433, float(rng.uniform(50, 3000)))
        t = 5
        try:
            got = refine_overlap(I, R, t, hw)
        except InfeasibleAtMinimumOverlap:
            assert runtime(n_windows(I, R, 0.5), t, hw) > hw.total_budget_s
            continue
        grid = [round(0.5 + k / 100, 2) for k in range(46)]
        fits = [p for p in grid if runtime(n_windows(I, R, p), t, hw) <= hw.total_budget_s]
        assert got == max(fits)


def test_full_plan_reference():
    t0 = time.perf_counter()
    bp = plan(I0, R0, HW)
    elapsed = time.perf_counter() - t0
    assert (bp.n_windows, bp.t_selected, bp.overlap_final) == (63, 25, 0.5)
    assert bp.t_max_real == pytest.approx(32.99, abs=0.01)
    assert bp.est_runtime_s == pytest.approx(63 * 25 * 0.433, abs=1e-9)
    assert bp.est_runtime_s <= 900
    assert elapsed < 0.05


def test_single_window_plan():
    bp = plan(R0, R0, HW)
    assert bp.t_selected == 300
    assert bp.est_runtime_s == pytest.approx(129.9, abs=0.01)
    assert bp.overlap_final == 0.95


def test_plan_validation():
    with pytest.raises(WindowLargerThanVolume):
        n_windows((10, 10, 10), (11, 10, 10), 0.5)
    with pytest.raises(InvalidOverlap):
        n_windows((10, 10, 10), (5, 5, 5), 1.0)
    with pytest.raises(InvalidOverlap):
        plan(I0, R0, HW, p_init=0.4)
    with pytest.raises(BudgetInfeasible):
        plan((512, 512, 512), (32, 32, 32), HW)


@pytest.mark.parametrize("p", [0.0, 0.5, 0.7, 0.9, 0.99])
def test_count_matches_placement(p):
    for I, R in [((37, 64, 100), (8, 16, 33)), ((9, 9, 9), (8, 8, 8)), (I0, R0)]:
        want = 1
        for i, r in zip(I, R):
            want *= _count_by_placement(i, r, p)
        assert n_windows(I, R, p) == want


def test_randomized_counts_and_monotonicity():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        R = tuple(int(r) for r in rng.integers(1, 40, 3))
        I = tuple(int(r + d) for r, d in zip(R, rng.integers(0, 80, 3)))
        p = round(float(rng.uniform(0.5, 0.95)), 2)
        n = n_windows(I, R, p)
        assert n == np.prod([_count_by_placement(i, r, p) for i, r in zip(I, R)])
        assert n >= n_windows(I, R, 0.5)


def test_plan_json_schema():
    import json

    from .conftest import validate

    validate(json.loads(plan(I0, R0, HW).to_json()), "budget_plan")


def test_plan_is_monotone_in_budget():
    prev = 0
    for budget in itertools.chain(range(200, 3000, 200)):
        bp = plan(I0, R0, HardwareProfile(0.433, float(budget)))
        assert bp.t_selected >= prev
        prev = bp.t_selected
