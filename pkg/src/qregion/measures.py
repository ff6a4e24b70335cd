"""Per-pixel semantic measures: spectral-residual saliency, CSF-weighted
spatial frequency, objectness (imported map or built-in proxy), and their
normalized average.

The frequency measure realizes "per-pixel response per frequency band" as a
band-pass filter bank: the spectrum is partitioned into radial
cycles-per-degree bins, each bin is inverted separately, and a pixel's band
response is the magnitude of that band-filtered image at the pixel.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass
from os import PathLike

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from qregion._binio import FormatError, expect_magic, read_exact, read_u32s
from qregion._pnm import pnm_maxval, read_pnm, write_pgm
from qregion._util import minmax01, resize_bilinear
from qregion.features import ImageBuffer

__all__ = [
    "MeasureMap",
    "BandDecomposition",
    "MeasureError",
    "MEASURE_KINDS",
    "spectral_residual_saliency",
    "band_decompose",
    "csf_weight",
    "csf_peak_frequency",
    "frequency_measure",
    "objectness",
    "fuse_average",
    "region_means",
    "export_measure_map",
    "import_measure_map",
    "export_measure_pgm",
    "load_external_map",
    "SMP_MAGIC",
    "NUM_BANDS",
    "MAX_CYCLES_PER_DEGREE",
    "DEFAULT_PIXELS_PER_DEGREE",
]

MEASURE_KINDS = ("saliency", "frequency", "objectness", "averaged")
SMP_MAGIC = b"SMP1"
NUM_BANDS = 10
MAX_CYCLES_PER_DEGREE = 50.0
# Nyquist (0.5 cycles/pixel) maps onto the 50 c/deg perceptual cap
DEFAULT_PIXELS_PER_DEGREE = 100.0

_SALIENCY_WORKING_SIDE = 128
_SALIENCY_SIGMA = 2.5
_EPS = 1e-12


class MeasureError(ValueError):
    """Invalid measure-map inputs."""


@dataclass(frozen=True)
class MeasureMap:
    """Per-pixel real-valued map for one semantic measure."""

    values: np.ndarray  # (H, W) float64, read-only
    kind: str

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise MeasureError(f"measure map must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise MeasureError("measure map contains non-finite values")
        if self.kind not in MEASURE_KINDS:
            raise MeasureError(f"unknown measure kind {self.kind!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BandDecomposition:
    """Per-pixel magnitude of each cycles-per-degree band of an image."""

    responses: np.ndarray  # (NUM_BANDS, H, W), read-only
    band_edges: np.ndarray  # (NUM_BANDS + 1,), 0..50
    pixels_per_degree: float

    def __post_init__(self) -> None:
        if self.responses.ndim != 3 or self.responses.shape[0] != NUM_BANDS:
            raise MeasureError(f"expected {NUM_BANDS} band responses")
        if len(self.band_edges) != NUM_BANDS + 1 or np.any(np.diff(self.band_edges) <= 0):
            raise MeasureError("band edges must be strictly increasing")
        if self.band_edges[-1] != MAX_CYCLES_PER_DEGREE:
            raise MeasureError(f"last band edge must be {MAX_CYCLES_PER_DEGREE}")
        self.responses.setflags(write=False)
        self.band_edges.setflags(write=False)

    def band_centers(self) -> np.ndarray:
        return (self.band_edges[:-1] + self.band_edges[1:]) / 2.0


def spectral_residual_saliency(image: ImageBuffer) -> MeasureMap:
    """Saliency from the spectral residual of the image's Fourier transform.

    Works on luma at a reduced resolution (longer side 128): the residual of
    the log-amplitude spectrum against its 3x3 local average is re-combined
    with the original phase, inverse transformed, squared, smoothed with a
    Gaussian (sigma 2.5), upscaled, and min-max normalized.
    """
    if image.height < 8 or image.width < 8:
        raise MeasureError(f"image {image.height}x{image.width} too small (need 8x8)")
    gray = image.luma()
    h, w = gray.shape
    longest = max(h, w)
    if longest > _SALIENCY_WORKING_SIDE:
        scale = _SALIENCY_WORKING_SIDE / longest
        work = resize_bilinear(gray, max(1, round(h * scale)), max(1, round(w * scale)))
    else:
        work = gray

    spectrum = np.fft.fft2(work)
    amplitude = np.abs(spectrum)
    log_amp = np.log(amplitude + _EPS)
    residual = log_amp - uniform_filter(log_amp, size=3, mode="wrap")
    # Scale the original spectrum instead of rebuilding from exp(R + iP):
    # identical where amplitude > 0, but exactly-zero coefficients stay zero,
    # so structureless images come out flat.
    filtered = spectrum * np.exp(residual) / (amplitude + _EPS)
    saliency = np.abs(np.fft.ifft2(filtered)) ** 2
    saliency = gaussian_filter(saliency, sigma=_SALIENCY_SIGMA)
    if saliency.shape != (h, w):
        saliency = resize_bilinear(saliency, h, w)
    return MeasureMap(values=minmax01(saliency), kind="saliency")


def band_decompose(
    image: ImageBuffer, pixels_per_degree: float = DEFAULT_PIXELS_PER_DEGREE
) -> BandDecomposition:
    """Split the image into 10 radial frequency bands over (0, 50] c/deg.

    Band k keeps spectrum coefficients whose radial frequency in
    cycles/degree lies in (edge_k, edge_{k+1}]; the DC coefficient belongs to
    no band, and frequencies above the 50 c/deg cap are discarded.
    """
    if not pixels_per_degree > 0:
        raise MeasureError("pixels_per_degree must be positive")
    gray = image.luma()
    spectrum = np.fft.fft2(gray)
    fy = np.fft.fftfreq(gray.shape[0])[:, None]
    fx = np.fft.fftfreq(gray.shape[1])[None, :]
    cpd = np.hypot(fy, fx) * pixels_per_degree
    edges = np.linspace(0.0, MAX_CYCLES_PER_DEGREE, NUM_BANDS + 1)
    responses = np.empty((NUM_BANDS,) + gray.shape)
    for k in range(NUM_BANDS):
        keep = (cpd > edges[k]) & (cpd <= edges[k + 1])
        responses[k] = np.abs(np.fft.ifft2(np.where(keep, spectrum, 0.0)))
    return BandDecomposition(
        responses=responses, band_edges=edges, pixels_per_degree=float(pixels_per_degree)
    )


def _mannos_sakrison(f: np.ndarray) -> np.ndarray:
    return 2.6 * (0.0192 + 0.114 * f) * np.exp(-((0.114 * f) ** 1.1))


@functools.lru_cache(maxsize=1)
def csf_peak_frequency() -> float:
    """Frequency (c/deg) where the contrast sensitivity weight peaks."""
    f = np.arange(0.0, MAX_CYCLES_PER_DEGREE, 1e-3)
    return float(f[np.argmax(_mannos_sakrison(f))])


def csf_weight(frequency):
    """Contrast-sensitivity weight for a spatial frequency in cycles/degree.

    Mannos-Sakrison sensitivity above its peak; below the peak the weight
    ramps linearly down to exactly 0 at DC (a uniform field carries no
    contrast).  Unimodal by construction.
    """
    f = np.asarray(frequency, dtype=np.float64)
    if np.any(f < 0):
        raise MeasureError("frequency must be non-negative")
    peak = csf_peak_frequency()
    ramp = _mannos_sakrison(np.float64(peak)) * (f / peak)
    out = np.where(f < peak, ramp, _mannos_sakrison(f))
    return float(out) if np.isscalar(frequency) else out


def frequency_measure(decomp: BandDecomposition) -> MeasureMap:
    """CSF-weighted sum of band magnitudes per pixel.

    Weights are evaluated at band centers, so mid-frequency content (near the
    sensitivity peak) dominates plain or very fine-grained regions.
    """
    weights = csf_weight(decomp.band_centers())
    values = np.tensordot(weights, decomp.responses, axes=1)
    return MeasureMap(values=values, kind="frequency")


def objectness(image: ImageBuffer, external_map: MeasureMap | None = None) -> MeasureMap:
    """Per-pixel likelihood of belonging to a foreground object.

    With an externally computed map (e.g. from a segmentation model via the
    bridge), pass it through clamped to [0, 1].  The built-in fallback is a
    crude proxy, not a learned model: spectral-residual saliency, a centered
    Gaussian prior (sigma 0.35 x min dimension), and local gradient structure
    multiplied together and normalized.
    """
    if external_map is not None:
        if (external_map.height, external_map.width) != (image.height, image.width):
            raise MeasureError(
                f"external map {external_map.height}x{external_map.width} does not "
                f"match image {image.height}x{image.width}"
            )
        return MeasureMap(values=np.clip(external_map.values, 0.0, 1.0), kind="objectness")

    sal = spectral_residual_saliency(image).values
    h, w = sal.shape
    yy = np.arange(h)[:, None] - (h - 1) / 2.0
    xx = np.arange(w)[None, :] - (w - 1) / 2.0
    sigma = 0.35 * min(h, w)
    center_prior = np.exp(-(yy**2 + xx**2) / (2.0 * sigma**2))
    gy, gx = np.gradient(image.luma())
    structure = minmax01(gaussian_filter(gy**2 + gx**2, sigma=2.0))
    return MeasureMap(values=minmax01(sal * center_prior * structure), kind="objectness")


def fuse_average(maps: list[MeasureMap]) -> MeasureMap:
    """Min-max normalize each map to [0, 1] and average pixel-wise.

    A constant map normalizes to all-0.5 (it expresses no preference), so
    fused values always stay within [0, 1].
    """
    if not maps:
        raise MeasureError("need at least one map to fuse")
    shape = maps[0].values.shape
    acc = np.zeros(shape)
    for m in maps:
        if m.values.shape != shape:
            raise MeasureError(f"map shapes differ: {m.values.shape} vs {shape}")
        lo, hi = m.values.min(), m.values.max()
        if hi - lo <= _EPS:
            acc += 0.5
        else:
            acc += (m.values - lo) / (hi - lo)
    return MeasureMap(values=acc / len(maps), kind="averaged")


def region_means(
    measure_map: MeasureMap, regions: list[tuple[int, int, int, int]]
) -> np.ndarray:
    """Arithmetic mean of map values inside each pixel rectangle."""
    out = np.empty(len(regions))
    for i, (r0, r1, c0, c1) in enumerate(regions):
        if r1 <= r0 or c1 <= c0:
            raise MeasureError(f"empty region ({r0},{r1},{c0},{c1})")
        if not (0 <= r0 and r1 <= measure_map.height and 0 <= c0 and c1 <= measure_map.width):
            raise MeasureError(f"region ({r0},{r1},{c0},{c1}) outside map")
        out[i] = measure_map.values[r0:r1, c0:c1].mean()
    return out


def export_measure_map(measure_map: MeasureMap, path: str | PathLike) -> None:
    """Write an SMP1 file: magic, u32 LE height/width, f32 LE values row-major."""
    with open(path, "wb") as fh:
        fh.write(SMP_MAGIC)
        fh.write(struct.pack("<2I", measure_map.height, measure_map.width))
        fh.write(np.ascontiguousarray(measure_map.values, dtype="<f4").tobytes())


def import_measure_map(path: str | PathLike, kind: str = "objectness") -> MeasureMap:
    with open(path, "rb") as fh:
        expect_magic(fh, SMP_MAGIC)
        height, width = read_u32s(fh, 2, "SMP header")
        if height < 1 or width < 1:
            raise FormatError(f"SMP header has non-positive dims {height}x{width}")
        payload = read_exact(fh, 4 * height * width, f"{height * width} float32 values")
        if fh.read(1):
            raise FormatError("trailing bytes after SMP payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError("SMP payload contains non-finite values")
    return MeasureMap(values=values, kind=kind)


def export_measure_pgm(measure_map: MeasureMap, path: str | PathLike) -> None:
    """Write an 8-bit grayscale viewing copy (min-max scaled)."""
    scaled = np.round(minmax01(measure_map.values) * 255.0).astype(np.uint8)
    write_pgm(path, scaled)


def load_external_map(path: str | PathLike, kind: str = "objectness") -> MeasureMap:
    """Read an externally produced map from SMP or PGM, scaled to [0, 1]."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == SMP_MAGIC:
        return import_measure_map(path, kind=kind)
    gray = read_pnm(path)
    if gray.ndim != 2:
        raise FormatError("external measure maps must be single-channel")
    return MeasureMap(values=gray.astype(np.float64) / pnm_maxval(path), kind=kind)
