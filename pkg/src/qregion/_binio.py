"""Helpers for the fixed little-endian binary interchange formats."""

from __future__ import annotations

import struct
from typing import BinaryIO


class FormatError(ValueError):
    """Malformed or truncated binary file."""


def read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: expected {n} bytes for {what}, got {len(data)}")
    return data


def expect_magic(fh: BinaryIO, magic: bytes) -> None:
    got = fh.read(len(magic))
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}")


def read_u32s(fh: BinaryIO, count: int, what: str) -> tuple[int, ...]:
    return struct.unpack(f"<{count}I", read_exact(fh, 4 * count, what))
