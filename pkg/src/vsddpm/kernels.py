"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time:

* ``numba`` when numba imports and ``VSDDPM_NO_JIT`` is unset or falsy;
* ``numpy`` otherwise.

Both variants of every kernel are always importable (``*_numba`` is only
compiled when numba is present) so tests and ``benchmarks/bench_kernels.py``
can compare them directly. :func:`set_backend` switches the dispatch at
runtime.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("VSDDPM_NO_JIT", "").strip().lower() in {"1", "true", "yes", "on"}
BACKEND = "numba" if HAVE_NUMBA and not _DISABLED else "numpy"


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"`` and return the previous backend."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, BACKEND = BACKEND, name
    return previous


def _njit(func):
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return None


# ---------------------------------------------------------------------------
# 1-D correlation along one axis, "valid" mode
# ---------------------------------------------------------------------------


def _correlate_rows_py(x2d, w):
    n_rows, n = x2d.shape
    k = w.shape[0]
    m = n - k + 1
    out = np.empty((n_rows, m))
    for r in range(n_rows):
        for i in range(m):
            acc = 0.0
            for j in range(k):
                acc += w[j] * x2d[r, i + j]
            out[r, i] = acc
    return out


_correlate_rows_jit = _njit(_correlate_rows_py)


def correlate1d_valid_numpy(x: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    k = w.shape[0]
    m = x.shape[axis] - k + 1
    x = np.moveaxis(x, axis, -1)
    out = np.zeros(x.shape[:-1] + (m,))
    for j in range(k):
        out += w[j] * x[..., j:j + m]
    return np.moveaxis(out, -1, axis)


def correlate1d_valid_numba(x: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    moved = np.ascontiguousarray(np.moveaxis(x, axis, -1), dtype=np.float64)
    lead = moved.shape[:-1]
    rows = _correlate_rows_jit(moved.reshape(-1, moved.shape[-1]), np.asarray(w, np.float64))
    return np.moveaxis(rows.reshape(lead + (rows.shape[-1],)), -1, axis)


def correlate1d_valid(x: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    """Correlate ``x`` with taps ``w`` along ``axis`` without padding."""
    if x.shape[axis] < w.shape[0]:
        raise ValueError("kernel longer than axis")
    if BACKEND == "numba":
        return correlate1d_valid_numba(x, w, axis)
    return correlate1d_valid_numpy(x, w, axis)


def separable_filter_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Apply the same 1-D taps along every axis of ``x`` ("valid" mode)."""
    out = np.asarray(x, dtype=np.float64)
    for axis in range(out.ndim):
        out = correlate1d_valid(out, w, axis)
    return out


# ---------------------------------------------------------------------------
# nearest-neighbour squared distances between two point clouds
# ---------------------------------------------------------------------------


def _min_sq_dist_py(a, b):
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        best = np.inf
        ax, ay, az = a[i, 0], a[i, 1], a[i, 2]
        for j in range(b.shape[0]):
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            dz = az - b[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
        out[i] = best
    return out


_min_sq_dist_jit = _njit(_min_sq_dist_py)


def min_sq_distances_numpy(a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], chunk):
        diff = a[start:start + chunk, None, :] - b[None, :, :]
        out[start:start + chunk] = np.einsum("ijk,ijk->ij", diff, diff).min(axis=1)
    return out


def min_sq_distances_numba(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _min_sq_dist_jit(np.ascontiguousarray(a, np.float64), np.ascontiguousarray(b, np.float64))


def min_sq_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """For every row of ``a`` (n, 3), the squared distance to its nearest row of ``b``."""
    if b.shape[0] == 0:
        raise ValueError("empty target point set")
    if a.shape[0] == 0:
        return np.empty(0)
    if BACKEND == "numba":
        return min_sq_distances_numba(a, b)
    return min_sq_distances_numpy(a, b)


# ---------------------------------------------------------------------------
# weighted window accumulation for stitching
# ---------------------------------------------------------------------------


def _accumulate_py(acc, wsum, outputs, offsets, weight):
    r0, r1, r2 = weight.shape
    for k in range(outputs.shape[0]):
        o0, o1, o2 = offsets[k, 0], offsets[k, 1], offsets[k, 2]
        for i in range(r0):
            for j in range(r1):
                for l in range(r2):
                    w = weight[i, j, l]
                    acc[o0 + i, o1 + j, o2 + l] += w * outputs[k, i, j, l]
                    wsum[o0 + i, o1 + j, o2 + l] += w


_accumulate_jit = _njit(_accumulate_py)


def accumulate_windows_numpy(acc, wsum, outputs, offsets, weight) -> None:
    r0, r1, r2 = weight.shape
    for k in range(outputs.shape[0]):
        o0, o1, o2 = (int(v) for v in offsets[k])
        sl = (slice(o0, o0 + r0), slice(o1, o1 + r1), slice(o2, o2 + r2))
        acc[sl] += weight * outputs[k]
        wsum[sl] += weight


def accumulate_windows_numba(acc, wsum, outputs, offsets, weight) -> None:
    _accumulate_jit(acc, wsum, np.ascontiguousarray(outputs, np.float64),
                    np.ascontiguousarray(offsets, np.int64), np.ascontiguousarray(weight, np.float64))


def accumulate_windows(acc, wsum, outputs, offsets, weight) -> None:
    """Add ``weight * outputs[k]`` into ``acc`` and ``weight`` into ``wsum`` at each offset, in place."""
    if BACKEND == "numba":
        accumulate_windows_numba(acc, wsum, outputs, offsets, weight)
    else:
        accumulate_windows_numpy(acc, wsum, outputs, offsets, weight)


# ---------------------------------------------------------------------------
# trilinear resampling under an affine map (output index -> source index)
# ---------------------------------------------------------------------------


def _affine_py(src, mat, off, fill):
    n0, n1, n2 = src.shape
    out = np.empty_like(src)
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                x = mat[0, 0] * i + mat[0, 1] * j + mat[0, 2] * k + off[0]
                y = mat[1, 0] * i + mat[1, 1] * j + mat[1, 2] * k + off[1]
                z = mat[2, 0] * i + mat[2, 1] * j + mat[2, 2] * k + off[2]
                if x < 0.0 or y < 0.0 or z < 0.0 or x > n0 - 1 or y > n1 - 1 or z > n2 - 1:
                    out[i, j, k] = fill
                    continue
                x0 = int(np.floor(x))
                y0 = int(np.floor(y))
                z0 = int(np.floor(z))
                fx = x - x0
                fy = y - y0
                fz = z - z0
                x1 = min(x0 + 1, n0 - 1)
                y1 = min(y0 + 1, n1 - 1)
                z1 = min(z0 + 1, n2 - 1)
                c00 = src[x0, y0, z0] + fz * (src[x0, y0, z1] - src[x0, y0, z0])
                c01 = src[x0, y1, z0] + fz * (src[x0, y1, z1] - src[x0, y1, z0])
                c10 = src[x1, y0, z0] + fz * (src[x1, y0, z1] - src[x1, y0, z0])
                c11 = src[x1, y1, z0] + fz * (src[x1, y1, z1] - src[x1, y1, z0])
                c0 = c00 + fy * (c01 - c00)
                c1 = c10 + fy * (c11 - c10)
                out[i, j, k] = c0 + fx * (c1 - c0)
    return out


_affine_jit = _njit(_affine_py)


def affine_resample_numpy(src, mat, off, fill) -> np.ndarray:
    n0, n1, n2 = src.shape
    idx = np.indices(src.shape, dtype=np.float64).reshape(3, -1)
    coords = mat @ idx + off[:, None]
    x, y, z = coords
    outside = (x < 0) | (y < 0) | (z < 0) | (x > n0 - 1) | (y > n1 - 1) | (z > n2 - 1)
    x = np.clip(x, 0, n0 - 1)
    y = np.clip(y, 0, n1 - 1)
    z = np.clip(z, 0, n2 - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    z0 = np.floor(z).astype(np.int64)
    fx, fy, fz = x - x0, y - y0, z - z0
    x1 = np.minimum(x0 + 1, n0 - 1)
    y1 = np.minimum(y0 + 1, n1 - 1)
    z1 = np.minimum(z0 + 1, n2 - 1)

    def lerp_z(a, b):
        lo = src[a, b, z0]
        return lo + fz * (src[a, b, z1] - lo)

    c00, c01 = lerp_z(x0, y0), lerp_z(x0, y1)
    c10, c11 = lerp_z(x1, y0), lerp_z(x1, y1)
    c0 = c00 + fy * (c01 - c00)
    c1 = c10 + fy * (c11 - c10)
    out = c0 + fx * (c1 - c0)
    out[outside] = fill
    return out.reshape(src.shape)


def affine_resample_numba(src, mat, off, fill) -> np.ndarray:
    return _affine_jit(np.ascontiguousarray(src, np.float64), np.ascontiguousarray(mat, np.float64),
                       np.ascontiguousarray(off, np.float64), float(fill))


def affine_resample(src: np.ndarray, mat: np.ndarray, off: np.ndarray, fill: float) -> np.ndarray:
    """Trilinear sample of ``src`` at ``mat @ index + off`` for every output index.

    Source coordinates outside ``[0, n-1]`` on any axis take ``fill``.
    """
    mat = np.asarray(mat, dtype=np.float64)
    off = np.asarray(off, dtype=np.float64)
    if BACKEND == "numba":
        return affine_resample_numba(src, mat, off, fill)
    return affine_resample_numpy(np.asarray(src, np.float64), mat, off, fill)
