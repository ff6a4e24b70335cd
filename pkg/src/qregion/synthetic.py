"""Seeded synthetic image corpus for tests and demos.

Images combine a smooth gradient background with a few textured patches
(gratings, noise, checkers) and image-level blur and noise, so feature
statistics, predictions, and region importance all vary across a corpus
without any external data.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from qregion.features import ImageBuffer

__all__ = ["generate_image", "generate_corpus"]

_TEXTURES = ("grating", "noise", "checker")


def _background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    yy = np.linspace(0.0, 1.0, height)[:, None]
    xx = np.linspace(0.0, 1.0, width)[None, :]
    a, b = rng.uniform(-0.25, 0.25, size=2)
    base = rng.uniform(0.35, 0.65) + a * yy + b * xx
    return np.clip(base, 0.05, 0.95)


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    kind = _TEXTURES[rng.integers(len(_TEXTURES))]
    if kind == "grating":
        freq = rng.uniform(0.05, 0.35)
        theta = rng.uniform(0.0, np.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        phase = 2.0 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy)
        return 0.5 * np.sin(phase + rng.uniform(0.0, 2.0 * np.pi))
    if kind == "noise":
        return rng.uniform(-0.5, 0.5, size=(h, w))
    period = int(rng.integers(3, 9))
    yy, xx = np.mgrid[0:h, 0:w]
    return np.where(((yy // period) + (xx // period)) % 2 == 0, 0.45, -0.45)


def generate_image(seed: int, height: int = 96, width: int = 128) -> ImageBuffer:
    """Deterministic RGB test image for the given seed."""
    rng = np.random.default_rng(np.uint64(seed))
    canvas = _background(rng, height, width)

    for _ in range(int(rng.integers(2, 6))):
        ph = int(rng.integers(height // 6, height // 2))
        pw = int(rng.integers(width // 6, width // 2))
        r0 = int(rng.integers(0, height - ph + 1))
        c0 = int(rng.integers(0, width - pw + 1))
        strength = rng.uniform(0.4, 1.0)
        canvas[r0 : r0 + ph, c0 : c0 + pw] += strength * _texture(rng, ph, pw)

    blur = rng.uniform(0.0, 2.5)
    if blur > 0.05:
        canvas = gaussian_filter(canvas, sigma=blur)
    canvas = canvas + rng.normal(0.0, rng.uniform(0.0, 0.02), size=canvas.shape)
    canvas = np.clip(canvas, 0.0, 1.0)

    tint = rng.uniform(0.85, 1.0, size=3)
    rgb = np.clip(canvas[..., None] * tint, 0.0, 1.0)
    return ImageBuffer(pixels=rgb)


def generate_corpus(
    count: int, seed: int = 0, height: int = 96, width: int = 128
) -> list[ImageBuffer]:
    """`count` images with per-image seeds derived from `seed`."""
    if count < 1:
        raise ValueError("count must be positive")
    root = np.random.default_rng(np.uint64(seed))
    child_seeds = root.integers(0, 2**63 - 1, size=count, dtype=np.int64)
    return [generate_image(int(s), height=height, width=width) for s in child_seeds]
