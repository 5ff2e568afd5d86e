"""Hot numeric kernels: bilinear rectilinear warping, Lanczos resampling, box smoothing.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy fallback.
The active backend is chosen once at import time; set ``ATTWARP_NO_NUMBA=1``
to force the numpy path (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import math
import os

import numpy as np

LANCZOS_A = 3  # window order; fixed so written artifacts stay byte-stable

_DISABLED = os.environ.get("ATTWARP_NO_NUMBA", "").lower() in ("1", "true", "yes")
try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# bilinear warp
# ---------------------------------------------------------------------------

def bilinear_warp_numpy(image: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Sample ``image`` at the rectilinear grid (fy[i], fx[j]) with bilinear blending.

    ``image`` is (H, W) or (H, W, C); sample coordinates are clamped to the
    valid pixel-center range. The warp is separable, so the gather uses one
    index vector per axis.
    """
    squeeze = image.ndim == 2
    img = image[:, :, None] if squeeze else image
    h, w = img.shape[:2]
    cx = np.clip(np.asarray(fx, dtype=np.float64), 0.0, w - 1.0)
    cy = np.clip(np.asarray(fy, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = (cx - x0)[None, :, None]
    ty = (cy - y0)[:, None, None]

    top = img[y0][:, x0] * (1.0 - tx) + img[y0][:, x1] * tx
    bot = img[y1][:, x0] * (1.0 - tx) + img[y1][:, x1] * tx
    out = top * (1.0 - ty) + bot * ty
    return out[:, :, 0] if squeeze else out


if HAVE_NUMBA:

    @njit(cache=True, fastmath=True)
    def _bilinear_warp_jit(img, cx, cy, out):  # pragma: no cover - exercised via wrapper
        h, w, c = img.shape
        for i in range(h):
            y = cy[i]
            y0 = int(math.floor(y))
            y1 = y0 + 1
            if y1 > h - 1:
                y1 = h - 1
            ty = y - y0
            for j in range(w):
                x = cx[j]
                x0 = int(math.floor(x))
                x1 = x0 + 1
                if x1 > w - 1:
                    x1 = w - 1
                tx = x - x0
                for k in range(c):
                    top = img[y0, x0, k] * (1.0 - tx) + img[y0, x1, k] * tx
                    bot = img[y1, x0, k] * (1.0 - tx) + img[y1, x1, k] * tx
                    out[i, j, k] = top * (1.0 - ty) + bot * ty
        return out

    def bilinear_warp_numba(image: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
        squeeze = image.ndim == 2
        img = np.ascontiguousarray(image[:, :, None] if squeeze else image, dtype=np.float64)
        h, w = img.shape[:2]
        cx = np.clip(np.asarray(fx, dtype=np.float64), 0.0, w - 1.0)
        cy = np.clip(np.asarray(fy, dtype=np.float64), 0.0, h - 1.0)
        out = np.empty_like(img)
        _bilinear_warp_jit(img, cx, cy, out)
        return out[:, :, 0] if squeeze else out

else:  # pragma: no cover
    bilinear_warp_numba = None


# ---------------------------------------------------------------------------
# Lanczos resampling
# ---------------------------------------------------------------------------

def lanczos_kernel(t: np.ndarray) -> np.ndarray:
    """Windowed sinc of order LANCZOS_A, zero outside |t| < A."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    inside = np.abs(t) < LANCZOS_A
    tt = t[inside]
    with np.errstate(invalid="ignore", divide="ignore"):
        val = (
            LANCZOS_A
            * np.sin(np.pi * tt)
            * np.sin(np.pi * tt / LANCZOS_A)
            / (np.pi * np.pi * tt * tt)
        )
    val[tt == 0.0] = 1.0
    out[inside] = val
    return out


def lanczos_weight_table(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-output tap start indices and normalized weights for one axis.

    Output sample ``j`` maps to source coordinate ``(j + 0.5) * n_in/n_out - 0.5``
    (half-pixel alignment). When shrinking, the kernel support widens by the
    scale factor so the result stays antialiased. Weights are normalized to
    sum to 1, which makes constant inputs exact fixed points. Tap indices may
    fall outside the source; callers clamp them (edge replication).
    """
    scale = n_in / n_out
    fscale = max(scale, 1.0)
    support = LANCZOS_A * fscale
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    starts = np.ceil(centers - support).astype(np.int64)
    ntaps = int(math.floor(2.0 * support)) + 1
    offsets = np.arange(ntaps, dtype=np.float64)
    dist = (starts[:, None] + offsets[None, :] - centers[:, None]) / fscale
    weights = lanczos_kernel(dist)
    weights /= weights.sum(axis=1, keepdims=True)
    return starts, weights


def _resample_axis_numpy(mat: np.ndarray, starts: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    n_in = mat.shape[axis]
    idx = np.clip(starts[:, None] + np.arange(weights.shape[1])[None, :], 0, n_in - 1)
    if axis == 0:
        gathered = mat[idx, :]  # (n_out, taps, W)
        return np.einsum("otw,ot->ow", gathered, weights)
    gathered = mat[:, idx]  # (H, n_out, taps)
    return np.einsum("hot,ot->ho", gathered, weights)


def lanczos_resize_numpy(mat: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    h, w = mat.shape
    if w != out_w:
        starts, weights = lanczos_weight_table(w, out_w)
        mat = _resample_axis_numpy(mat, starts, weights, axis=1)
    if h != out_h:
        starts, weights = lanczos_weight_table(h, out_h)
        mat = _resample_axis_numpy(mat, starts, weights, axis=0)
    return mat


if HAVE_NUMBA:

    @njit(cache=True, fastmath=True)
    def _resample_cols_jit(mat, starts, weights, out):  # pragma: no cover
        h, n_in = mat.shape
        n_out, ntaps = weights.shape
        for i in range(h):
            for j in range(n_out):
                acc = 0.0
                for t in range(ntaps):
                    k = starts[j] + t
                    if k < 0:
                        k = 0
                    elif k > n_in - 1:
                        k = n_in - 1
                    acc += mat[i, k] * weights[j, t]
                out[i, j] = acc
        return out

    @njit(cache=True, fastmath=True)
    def _resample_rows_jit(mat, starts, weights, out):  # pragma: no cover
        n_in, w = mat.shape
        n_out, ntaps = weights.shape
        for i in range(n_out):
            for j in range(w):
                acc = 0.0
                for t in range(ntaps):
                    k = starts[i] + t
                    if k < 0:
                        k = 0
                    elif k > n_in - 1:
                        k = n_in - 1
                    acc += mat[k, j] * weights[i, t]
                out[i, j] = acc
        return out

    def lanczos_resize_numba(mat: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
        mat = np.ascontiguousarray(mat, dtype=np.float64)
        h, w = mat.shape
        if w != out_w:
            starts, weights = lanczos_weight_table(w, out_w)
            out = np.empty((h, out_w), dtype=np.float64)
            mat = _resample_cols_jit(mat, starts, weights, out)
        if h != out_h:
            starts, weights = lanczos_weight_table(h, out_h)
            out = np.empty((out_h, mat.shape[1]), dtype=np.float64)
            mat = _resample_rows_jit(mat, starts, weights, out)
        return mat

else:  # pragma: no cover
    lanczos_resize_numba = None


# ---------------------------------------------------------------------------
# box smoothing (k x k mean, stride 1, window clipped at borders)
# ---------------------------------------------------------------------------

def _box_axis_numpy(mat: np.ndarray, k: int, axis: int) -> np.ndarray:
    n = mat.shape[axis]
    r = k // 2
    csum = np.cumsum(mat, axis=axis)
    pad = [(0, 0), (0, 0)]
    pad[axis] = (1, 0)
    csum = np.pad(csum, pad)
    lo = np.maximum(np.arange(n) - r, 0)
    hi = np.minimum(np.arange(n) + r, n - 1)
    count = (hi - lo + 1).astype(np.float64)
    if axis == 0:
        return (csum[hi + 1, :] - csum[lo, :]) / count[:, None]
    return (csum[:, hi + 1] - csum[:, lo]) / count[None, :]


def box_smooth_numpy(mat: np.ndarray, k: int) -> np.ndarray:
    """k x k average with the window clipped at the borders.

    Count normalization keeps constants exact fixed points at every pixel,
    border included. k must be odd; k == 1 is the identity.
    """
    if k == 1:
        return np.asarray(mat, dtype=np.float64).copy()
    mat = np.asarray(mat, dtype=np.float64)
    return _box_axis_numpy(_box_axis_numpy(mat, k, axis=1), k, axis=0)


if HAVE_NUMBA:

    @njit(cache=True, fastmath=True)
    def _box_smooth_jit(mat, r, tmp, out):  # pragma: no cover
        h, w = mat.shape
        for i in range(h):
            for j in range(w):
                lo = j - r
                if lo < 0:
                    lo = 0
                hi = j + r
                if hi > w - 1:
                    hi = w - 1
                acc = 0.0
                for t in range(lo, hi + 1):
                    acc += mat[i, t]
                tmp[i, j] = acc / (hi - lo + 1)
        for j in range(w):
            for i in range(h):
                lo = i - r
                if lo < 0:
                    lo = 0
                hi = i + r
                if hi > h - 1:
                    hi = h - 1
                acc = 0.0
                for t in range(lo, hi + 1):
                    acc += tmp[t, j]
                out[i, j] = acc / (hi - lo + 1)
        return out

    def box_smooth_numba(mat: np.ndarray, k: int) -> np.ndarray:
        if k == 1:
            return np.asarray(mat, dtype=np.float64).copy()
        mat = np.ascontiguousarray(mat, dtype=np.float64)
        tmp = np.empty_like(mat)
        out = np.empty_like(mat)
        _box_smooth_jit(mat, k // 2, tmp, out)
        return out

else:  # pragma: no cover
    box_smooth_numba = None


# ---------------------------------------------------------------------------
# backend dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    bilinear_warp = bilinear_warp_numba
    lanczos_resize = lanczos_resize_numba
    box_smooth = box_smooth_numba
else:
    bilinear_warp = bilinear_warp_numpy
    lanczos_resize = lanczos_resize_numpy
    box_smooth = box_smooth_numpy


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
