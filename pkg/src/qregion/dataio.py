"""Dataset ingestion, image decoding/encoding, run configuration, and
static heatmap rendering for reports.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, fields
from os import PathLike
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from qregion._pnm import FormatError, pnm_maxval, read_pnm, write_pgm, write_ppm
from qregion._util import minmax01
from qregion.encoder import EncoderConfig
from qregion.features import ImageBuffer
from qregion.grid import BlockGrid, BlockSet, block_set_to_pixel_regions
from qregion.importance import MODE_DATASET_PLCC, MODE_IMAGE_DEVIATION
from qregion.measures import MeasureMap

__all__ = [
    "DataError",
    "DatasetRecord",
    "RunConfig",
    "CONFIG_ENV_VAR",
    "load_dataset",
    "decode_image",
    "encode_image",
    "render_heatmap",
    "render_masked_image",
    "load_run_config",
]

CONFIG_ENV_VAR = "QREGION_CONFIG"

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PREDICTORS = ("builtin_encoder", "builtin_heuristic")
_MODE_ALIASES = {
    "deviation": MODE_IMAGE_DEVIATION,
    "plcc": MODE_DATASET_PLCC,
    MODE_IMAGE_DEVIATION: MODE_IMAGE_DEVIATION,
    MODE_DATASET_PLCC: MODE_DATASET_PLCC,
}


class DataError(ValueError):
    """Invalid dataset, image file, or configuration."""


@dataclass(frozen=True)
class DatasetRecord:
    image_path: str
    mos: float | None = None

    def __post_init__(self) -> None:
        if not self.image_path:
            raise DataError("record has empty image path")
        if self.mos is not None and not np.isfinite(self.mos):
            raise DataError(f"record {self.image_path!r} has non-finite mos")


def load_dataset(csv_path: str | PathLike) -> list[DatasetRecord]:
    """Parse a `image_path,mos` CSV; the mos column is optional.

    Relative image paths are resolved against the CSV's own directory.
    """
    path = Path(csv_path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty dataset file") from None
        header = [h.strip() for h in header]
        if header[:1] != ["image_path"] or header not in (
            ["image_path"],
            ["image_path", "mos"],
        ):
            raise DataError(f"{path}: header must be 'image_path' or 'image_path,mos'")
        has_mos = len(header) == 2

        records = []
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line_no}: expected {len(header)} fields")
            raw = row[0].strip()
            if not raw:
                raise DataError(f"{path}: line {line_no}: empty image path")
            mos = None
            if has_mos and row[1].strip():
                try:
                    mos = float(row[1])
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}: non-numeric mos {row[1]!r}"
                    ) from None
            resolved = str((path.parent / raw).resolve()) if not os.path.isabs(raw) else raw
            if resolved in seen:
                raise DataError(f"{path}: line {line_no}: duplicate image path {raw!r}")
            seen.add(resolved)
            records.append(DatasetRecord(image_path=resolved, mos=mos))
    return records


def _sniff_magic(path: Path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(8)


def decode_image(path: str | PathLike) -> ImageBuffer:
    """Read a PNG, PGM, or PPM file into an ImageBuffer scaled to [0, 1]."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"image file not found: {p}")
    magic = _sniff_magic(p)
    if magic[:2] in (b"P2", b"P3", b"P5", b"P6"):
        try:
            arr = read_pnm(p)
        except FormatError as exc:
            raise DataError(f"{p}: {exc}") from exc
        scale = float(pnm_maxval(p))
        pixels = arr.astype(np.float64) / scale
        if pixels.ndim == 2:
            pixels = pixels[..., None]
        return ImageBuffer(pixels=pixels)
    if magic == _PNG_MAGIC:
        try:
            with Image.open(p) as img:
                img.load()
                if img.mode == "L":
                    pixels = np.asarray(img, dtype=np.float64)[..., None] / 255.0
                elif img.mode in ("I", "I;16"):
                    pixels = np.asarray(img, dtype=np.float64)[..., None] / 65535.0
                else:
                    pixels = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        except (OSError, UnidentifiedImageError, SyntaxError) as exc:
            raise DataError(f"{p}: corrupt PNG ({exc})") from exc
        return ImageBuffer(pixels=pixels)
    raise DataError(f"{p}: unsupported image format (want PNG, PGM, or PPM)")


def encode_image(image: ImageBuffer, out_path: str | PathLike) -> None:
    """Write an ImageBuffer as PNG, PGM, or PPM chosen by file extension."""
    p = Path(out_path)
    quantized = np.round(np.clip(image.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    suffix = p.suffix.lower()
    if suffix == ".png":
        if quantized.shape[2] == 1:
            Image.fromarray(quantized[..., 0], mode="L").save(p, format="PNG")
        else:
            Image.fromarray(quantized, mode="RGB").save(p, format="PNG")
    elif suffix == ".pgm":
        gray = quantized[..., 0] if quantized.shape[2] == 1 else np.round(
            np.clip(image.luma(), 0.0, 1.0) * 255.0
        ).astype(np.uint8)
        write_pgm(p, gray)
    elif suffix == ".ppm":
        rgb = quantized if quantized.shape[2] == 3 else np.repeat(quantized, 3, axis=2)
        write_ppm(p, rgb)
    else:
        raise DataError(f"unsupported output extension {suffix!r} (want .png/.pgm/.ppm)")


def _write_gray(gray: np.ndarray, out_path: Path) -> None:
    if out_path.suffix.lower() == ".png":
        Image.fromarray(gray, mode="L").save(out_path, format="PNG")
    elif out_path.suffix.lower() == ".pgm":
        write_pgm(out_path, gray)
    else:
        raise DataError(f"unsupported render extension {out_path.suffix!r}")


def render_heatmap(
    values: MeasureMap | np.ndarray,
    out_path: str | PathLike,
    grid: BlockGrid | None = None,
    image_shape: tuple[int, int] | None = None,
) -> None:
    """Render a scalar field as an 8-bit grayscale PGM or PNG.

    A 2-D map is min-max scaled directly.  A 1-D per-block score vector
    (requires `grid` and `image_shape`) is painted as the block tiling with
    one constant intensity per block, monotone in score.
    """
    out = Path(out_path)
    if isinstance(values, MeasureMap):
        values = values.values
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError("heatmap values must be finite")
    if arr.ndim == 2:
        gray = np.round(minmax01(arr) * 255.0).astype(np.uint8)
        if arr.max() - arr.min() <= 1e-12:
            gray = np.full(arr.shape, 128, dtype=np.uint8)
        _write_gray(gray, out)
        return
    if arr.ndim == 1:
        if grid is None or image_shape is None:
            raise DataError("per-block rendering needs grid and image_shape")
        if len(arr) != grid.block_count:
            raise DataError(f"expected {grid.block_count} block scores, got {len(arr)}")
        h, w = image_shape
        scaled = minmax01(arr) if arr.max() - arr.min() > 1e-12 else np.full(len(arr), 0.5)
        canvas = np.empty((h, w), dtype=np.uint8)
        all_blocks = BlockSet.full(grid.block_count)
        rects = block_set_to_pixel_regions(all_blocks, grid, h, w)
        for block_index, (r0, r1, c0, c1) in zip(all_blocks.indices(), rects):
            canvas[r0:r1, c0:c1] = round(scaled[block_index] * 255.0)
        _write_gray(canvas, out)
        return
    raise DataError(f"cannot render array of ndim {arr.ndim}")


def render_masked_image(
    image: ImageBuffer,
    blocks: BlockSet,
    grid: BlockGrid,
    out_path: str | PathLike,
) -> None:
    """Render the image with the selected blocks blacked out (split views)."""
    gray = np.round(np.clip(image.luma(), 0.0, 1.0) * 255.0).astype(np.uint8)
    for r0, r1, c0, c1 in block_set_to_pixel_regions(
        blocks, grid, image.height, image.width
    ):
        gray[r0:r1, c0:c1] = 0
    _write_gray(gray, Path(out_path))


@dataclass(frozen=True)
class RunConfig:
    """Validated settings shared by every pipeline command."""

    grid_rows: int = 3
    grid_cols: int = 4
    mode: str = MODE_IMAGE_DEVIATION
    subset_cap: int = 924
    seed: int = 0
    predictor: str = "builtin_encoder"
    pixels_per_degree: float = 100.0
    thresholds: tuple[int, ...] = (1, 2, 3, 4, 5)
    output_dir: str = "qregion-out"
    workers: int | None = None
    stride: int = 32
    channels: int = 16
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 2
    mlp_dim: int = 128
    mask_logit_value: float = -1e9

    def __post_init__(self) -> None:
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise DataError("grid dimensions must be positive")
        if self.grid_rows * self.grid_cols < 2:
            raise DataError("grid must have at least 2 blocks")
        mode = _MODE_ALIASES.get(self.mode)
        if mode is None:
            raise DataError(f"unknown importance mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.subset_cap < 1:
            raise DataError("subset_cap must be positive")
        if not 0 <= self.seed < 2**64:
            raise DataError("seed out of range")
        if self.predictor not in _PREDICTORS and not self.predictor.startswith("bridge:"):
            raise DataError(
                f"predictor must be one of {_PREDICTORS} or 'bridge:<command>', "
                f"got {self.predictor!r}"
            )
        if self.predictor.startswith("bridge:") and not self.predictor[7:].strip():
            raise DataError("bridge predictor needs a command after 'bridge:'")
        if not self.pixels_per_degree > 0:
            raise DataError("pixels_per_degree must be positive")
        thresholds = tuple(self.thresholds)
        if not thresholds or any(
            not isinstance(t, int) or isinstance(t, bool) or t < 1 for t in thresholds
        ):
            raise DataError("thresholds must be positive integers")
        if list(thresholds) != sorted(set(thresholds)):
            raise DataError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", thresholds)
        if not self.output_dir:
            raise DataError("output_dir must be non-empty")
        if self.workers is not None and self.workers < 1:
            raise DataError("workers must be positive")
        if self.stride < 1:
            raise DataError("stride must be positive")
        if self.channels < 1:
            raise DataError("channels must be positive")
        try:
            self.encoder_config()
        except ValueError as exc:
            raise DataError(f"invalid encoder settings: {exc}") from exc

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            embed_dim=self.embed_dim,
            num_heads=self.num_heads,
            num_layers=self.num_layers,
            mlp_dim=self.mlp_dim,
            mask_logit_value=self.mask_logit_value,
            seed=self.seed,
        )

    def grid_for(self, feature_rows: int, feature_cols: int) -> BlockGrid:
        return BlockGrid(
            rows=feature_rows,
            cols=feature_cols,
            grid_rows=self.grid_rows,
            grid_cols=self.grid_cols,
        )


_CONFIG_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _coerce_config_values(raw: dict, source: str) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in _CONFIG_FIELD_TYPES:
            raise DataError(f"{source}: unknown config key {key!r}")
        if key == "thresholds":
            if not isinstance(value, (list, tuple)):
                raise DataError(f"{source}: thresholds must be a list")
            value = tuple(value)
        out[key] = value
    return out


def load_run_config(
    config_path: str | PathLike | None = None, overrides: dict | None = None
) -> RunConfig:
    """Build a RunConfig from defaults, an optional JSON file, and overrides.

    When no path is given, the QREGION_CONFIG environment variable may name
    a default file.  Overrides (typically CLI flags) win over the file.
    """
    if config_path is None:
        env = os.environ.get(CONFIG_ENV_VAR, "").strip()
        config_path = env or None
    settings: dict = {}
    if config_path is not None:
        p = Path(config_path)
        if not p.is_file():
            raise DataError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{p}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise DataError(f"{p}: config must be a JSON object")
        settings.update(_coerce_config_values(raw, str(p)))
    if overrides:
        settings.update(_coerce_config_values(overrides, "overrides"))
    try:
        return RunConfig(**settings)
    except TypeError as exc:
        raise DataError(f"invalid config: {exc}") from exc
