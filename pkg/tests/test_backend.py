import os
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def _backend_with(env_value):
    env = dict(os.environ, VSDDPM_NO_JIT=env_value)
    out = subprocess.run([sys.executable, "-c", "from vsddpm import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_flag_forces_numpy():
    assert _backend_with("1") == "numpy"


def test_default_backend_prefers_numba():
    from vsddpm import kernels

    assert _backend_with("") == ("numba" if kernels.HAVE_NUMBA else "numpy")


def test_benchmark_runs(tmp_path):
    out = subprocess.run([sys.executable, str(ROOT / "benchmarks" / "bench_kernels.py"), "--repeats", "1",
                          "--json", str(tmp_path / "b.json")], capture_output=True, text=True, check=True)
    assert "min_sq_distances" in out.stdout
    assert (tmp_path / "b.json").exists()
