"""Feature-matrix production: built-in patch-statistics extractor, FMX file
interchange, and a self-contained heuristic quality score.

The built-in extractor stands in for a head-less CNN backbone: stride 32
mirrors the usual ResNet-style spatial reduction so the grid geometry of the
masking analysis carries over unchanged, with a much smaller channel count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike

import numpy as np

from qregion._binio import FormatError, expect_magic, read_exact, read_u32s
from qregion._util import luma
from qregion.grid import FeatureMatrix

__all__ = [
    "ImageBuffer",
    "ImageError",
    "extract_builtin",
    "export_feature_matrix",
    "import_feature_matrix",
    "baseline_heuristic_score",
    "FMX_MAGIC",
]

FMX_MAGIC = b"FMX1"


class ImageError(ValueError):
    """Invalid image contents or dimensions."""


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable (height, width, channels) pixel array, values in [0, 1]."""

    pixels: np.ndarray  # float64, channels in {1, 3}, read-only

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ImageError(f"expected (H, W, 1|3) pixels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageError("image dimensions must be positive")
        if not np.all(np.isfinite(arr)):
            raise ImageError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ImageError("pixel values must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def luma(self) -> np.ndarray:
        return luma(self.pixels)


def _patch_band_energies(patch: np.ndarray, n_bands: int) -> np.ndarray:
    """Radial FFT energy of a patch split into n_bands equal AC bins."""
    spec = np.fft.fft2(patch - patch.mean())
    power = np.abs(spec) ** 2 / patch.size
    fy = np.fft.fftfreq(patch.shape[0])[:, None]
    fx = np.fft.fftfreq(patch.shape[1])[None, :]
    radius = np.hypot(fy, fx)
    r_max = np.hypot(0.5, 0.5)
    edges = np.linspace(0.0, r_max, n_bands + 1)
    out = np.empty(n_bands)
    for k in range(n_bands):
        sel = (radius > edges[k]) & (radius <= edges[k + 1])
        out[k] = power[sel].sum()
    return out


def extract_builtin(
    image: ImageBuffer,
    stride: int = 32,
    channels_out: int = 16,
    normalize: bool = True,
) -> FeatureMatrix:
    """Deterministic per-patch statistics over a stride x stride tiling.

    Output dims are (height // stride, width // stride, channels_out).  Each
    cell holds the patch's channel means and standard deviations, mean
    gradient magnitude, Laplacian energy, and radial band energies; features
    are z-scored per image across cells unless ``normalize`` is False.
    """
    if stride < 1:
        raise ImageError("stride must be positive")
    if image.height < stride or image.width < stride:
        raise ImageError(
            f"image {image.height}x{image.width} too small for stride {stride}"
        )
    c_img = image.channels
    base = 2 * c_img + 2
    n_bands = channels_out - base
    if n_bands < 1:
        raise ImageError(
            f"channels_out={channels_out} too small: need at least {base + 1} "
            f"for a {c_img}-channel image"
        )

    g_rows = image.height // stride
    g_cols = image.width // stride
    feats = np.empty((g_rows, g_cols, channels_out))
    gray = image.luma()
    for r in range(g_rows):
        for c in range(g_cols):
            sl = (slice(r * stride, (r + 1) * stride), slice(c * stride, (c + 1) * stride))
            patch = image.pixels[sl]
            gpatch = gray[sl]
            gy, gx = np.gradient(gpatch)
            lap = (
                gpatch[:-2, 1:-1]
                + gpatch[2:, 1:-1]
                + gpatch[1:-1, :-2]
                + gpatch[1:-1, 2:]
                - 4.0 * gpatch[1:-1, 1:-1]
            )
            cell = np.concatenate(
                [
                    patch.mean(axis=(0, 1)),
                    patch.std(axis=(0, 1)),
                    [np.hypot(gy, gx).mean()],
                    [np.square(lap).mean() if lap.size else 0.0],
                    _patch_band_energies(gpatch, n_bands),
                ]
            )
            feats[r, c] = cell

    if normalize:
        flat = feats.reshape(-1, channels_out)
        feats = (feats - flat.mean(axis=0)) / (flat.std(axis=0) + 1e-8)
    return FeatureMatrix(feats.astype(np.float32))


def export_feature_matrix(fm: FeatureMatrix, path: str | PathLike) -> None:
    """Write an FMX1 file: magic, u32 LE rows/cols/channels, f32 LE payload."""
    with open(path, "wb") as fh:
        fh.write(FMX_MAGIC)
        fh.write(struct.pack("<3I", fm.rows, fm.cols, fm.channels))
        fh.write(np.ascontiguousarray(fm.data, dtype="<f4").tobytes())


def import_feature_matrix(path: str | PathLike) -> FeatureMatrix:
    """Read an FMX1 file; round-trips with export_feature_matrix bit-exactly."""
    with open(path, "rb") as fh:
        expect_magic(fh, FMX_MAGIC)
        rows, cols, channels = read_u32s(fh, 3, "FMX header")
        if rows < 1 or cols < 1 or channels < 1:
            raise FormatError(f"FMX header has non-positive dims {rows}x{cols}x{channels}")
        count = rows * cols * channels
        payload = read_exact(fh, 4 * count, f"{count} float32 values")
        if fh.read(1):
            raise FormatError("trailing bytes after FMX payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols, channels)
    if not np.all(np.isfinite(data)):
        raise FormatError("FMX payload contains non-finite values")
    return FeatureMatrix(data)


def baseline_heuristic_score(image: ImageBuffer) -> float:
    """Deterministic stand-in quality score in [1, 5].

    Combines the mid-band share of AC spectral energy with mean gradient
    magnitude; constant images score exactly 1.0.
    """
    gray = image.luma()
    ac = gray - gray.mean()
    power = np.abs(np.fft.fft2(ac)) ** 2
    total = power.sum()
    fy = np.fft.fftfreq(gray.shape[0])[:, None]
    fx = np.fft.fftfreq(gray.shape[1])[None, :]
    radius = np.hypot(fy, fx)
    mid = power[(radius >= 1 / 16) & (radius <= 1 / 4)].sum()
    mid_ratio = float(mid / total) if total > 1e-12 else 0.0
    gy, gx = np.gradient(gray)
    grad_mean = float(np.hypot(gy, gx).mean())
    return 1.0 + 4.0 * (1.0 - np.exp(-(6.0 * mid_ratio + 10.0 * grad_mean)))
