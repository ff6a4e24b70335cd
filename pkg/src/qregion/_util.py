"""Small shared numerics: luma conversion, bilinear resize, min-max scaling."""

from __future__ import annotations

import numpy as np

# Rec. 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def luma(pixels: np.ndarray) -> np.ndarray:
    """Grayscale (H, W) float64 view of (H, W, C) pixels, C in {1, 3}."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.shape[2] == 1:
        return arr[:, :, 0]
    return arr @ _LUMA


def minmax01(arr: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Scale to [0, 1]; an (almost) constant array maps to all zeros."""
    arr = np.asarray(arr, dtype=np.float64)
    lo = arr.min()
    span = arr.max() - lo
    if span <= eps:
        return np.zeros_like(arr)
    return (arr - lo) / span


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a 2-D array to (out_h, out_w).

    Pixel-center alignment (src = (dst + 0.5) * scale - 0.5), which keeps the
    operation symmetric under horizontal/vertical flips.
    """
    arr = np.asarray(arr, dtype=np.float64)
    in_h, in_w = arr.shape
    if (out_h, out_w) == (in_h, in_w):
        return arr.copy()

    def axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        lo = np.clip(lo, 0, n_in - 1)
        hi = np.clip(lo + 1, 0, n_in - 1)
        # edge samples: collapse the interpolation weight instead of extrapolating
        frac = np.clip(frac, 0.0, 1.0)
        return lo, hi, frac

    y0, y1, fy = axis_coords(out_h, in_h)
    x0, x1, fx = axis_coords(out_w, in_w)
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]
