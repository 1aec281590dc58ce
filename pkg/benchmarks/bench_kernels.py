"""Time each hot kernel under the numba and pure-numpy backends.

    python benchmarks/bench_kernels.py [--repeats 5] [--json out.json]

The first numba call per kernel (compilation or cache load) is excluded.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from vsddpm import kernels
from vsddpm.tiler import make_plan, window_weights


def _cases(rng):
    vol = rng.standard_normal((64, 64, 48))
    taps = np.exp(-0.5 * (np.arange(7) - 3.0) ** 2 / 1.5**2)
    taps /= taps.sum()
    pa = rng.uniform(0, 40, (3000, 3))
    pb = rng.uniform(0, 40, (3000, 3))
    plan = make_plan((96, 96, 64), (32, 32, 16), 0.5)
    outs = rng.standard_normal((len(plan),) + plan.R)
    w = window_weights(plan.R, "cosine_taper")
    th = 0.05
    mat = np.array([[np.cos(th), -np.sin(th), 0.0], [np.sin(th), np.cos(th), 0.0], [0.0, 0.0, 1.0]])
    off = np.array([1.2, -0.8, 0.0])

    def accumulate():
        acc, ws = np.zeros(plan.I), np.zeros(plan.I)
        kernels.accumulate_windows(acc, ws, outs, plan.offsets_array(), w)

    return {
        "separable_filter_valid 64x64x48, 7 taps": lambda: kernels.separable_filter_valid(vol, taps),
        "min_sq_distances 3000x3000": lambda: kernels.min_sq_distances(pa, pb),
        f"accumulate_windows {len(plan)} windows": accumulate,
        "affine_resample 64x64x48": lambda: kernels.affine_resample(vol, mat, off, 0.0),
    }


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    results = {}
    for name, fn in _cases(np.random.default_rng(0)).items():
        row = {}
        for b in backends:
            prev = kernels.set_backend(b)
            try:
                fn()  # warm-up
                row[b] = _time(fn, args.repeats)
            finally:
                kernels.set_backend(prev)
        results[name] = row

    print(f"{'kernel':46s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, row in results.items():
        line = f"{name:46s}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{row['numpy'] / row['numba']:11.1f}x"
        print(line)
    if not kernels.HAVE_NUMBA:
        print("numba not installed: only the numpy backend was timed")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
