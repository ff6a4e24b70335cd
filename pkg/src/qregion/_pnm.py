"""Minimal PGM/PPM (P2/P5/P3/P6) reader and binary writer."""

from __future__ import annotations

from os import PathLike

import numpy as np

from qregion._binio import FormatError


def _read_tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Read whitespace/comment-separated ASCII integers from a PNM header."""
    tokens: list[int] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] not in (10, 13):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PNM header")
        try:
            tokens.append(int(data[i:j]))
        except ValueError as exc:
            raise FormatError(f"bad PNM header token {data[i:j]!r}") from exc
        i = j
    return tokens, i


def read_pnm(path: str | PathLike) -> np.ndarray:
    """Read a PGM/PPM file as uint8/uint16 array (H, W) or (H, W, 3)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise FormatError(f"not a PGM/PPM file (magic {magic!r})")
    channels = 3 if magic in (b"P3", b"P6") else 1
    (width, height, maxval), pos = _read_tokens(data, 3, 2)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"bad PNM dimensions {width}x{height} maxval {maxval}")
    count = width * height * channels
    if magic in (b"P5", b"P6"):
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        end = pos + count * dtype.itemsize
        if end > len(data):
            raise FormatError("truncated PNM payload")
        arr = np.frombuffer(data[pos:end], dtype=dtype).astype(np.uint16)
    else:
        values, _ = _read_tokens(data, count, pos)
        arr = np.asarray(values, dtype=np.uint16)
    if arr.max(initial=0) > maxval:
        raise FormatError("PNM sample exceeds declared maxval")
    arr = arr.reshape((height, width, 3) if channels == 3 else (height, width))
    return arr.astype(np.uint8) if maxval < 256 else arr


def pnm_maxval(path: str | PathLike) -> int:
    with open(path, "rb") as fh:
        data = fh.read(512)
    (_, _, maxval), _ = _read_tokens(data, 3, 2)
    return maxval


def write_pgm(path: str | PathLike, gray: np.ndarray) -> None:
    """Write a uint8 (H, W) array as binary PGM (P5)."""
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise FormatError(f"PGM wants a 2-D array, got shape {gray.shape}")
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (gray.shape[1], gray.shape[0]))
        fh.write(gray.tobytes())


def write_ppm(path: str | PathLike, rgb: np.ndarray) -> None:
    """Write a uint8 (H, W, 3) array as binary PPM (P6)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise FormatError(f"PPM wants an (H, W, 3) array, got shape {rgb.shape}")
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (rgb.shape[1], rgb.shape[0]))
        fh.write(rgb.tobytes())
