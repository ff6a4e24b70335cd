"""Writer for the FMX1 feature-matrix container.

Layout: 4-byte magic ``FMX1``, three little-endian uint32 (rows, cols,
channels), then rows*cols*channels little-endian float32 values in C order.
"""

import struct
from os import PathLike

import numpy as np

FMX_MAGIC = b"FMX1"

__all__ = ["FMX_MAGIC", "write_feature_matrix"]


def write_feature_matrix(data: np.ndarray, path: str | PathLike) -> None:
    """Write a (rows, cols, channels) array as an FMX1 file."""
    arr = np.asarray(data, dtype="<f4")
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"feature matrix must be (rows, cols, channels), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature matrix contains non-finite values")
    rows, cols, channels = arr.shape
    with open(path, "wb") as fh:
        fh.write(FMX_MAGIC)
        fh.write(struct.pack("<3I", rows, cols, channels))
        fh.write(np.ascontiguousarray(arr).tobytes())
