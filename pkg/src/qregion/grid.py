"""Feature-grid partitioning, block sets, and mask-combination enumeration.

A feature matrix (rows x cols x channels) is tiled into a small grid of
rectangular blocks (default 3x4).  Block subsets act as attention masks over
the feature grid and as pixel-region selectors on the source image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "FeatureMatrix",
    "BlockGrid",
    "BlockSet",
    "GridError",
    "partition_grid",
    "enumerate_block_subsets",
    "block_set_to_feature_mask",
    "block_set_to_pixel_regions",
]


class GridError(ValueError):
    """Invalid grid geometry or block-set arguments."""


@dataclass(frozen=True)
class FeatureMatrix:
    """Immutable rows x cols x channels grid of real-valued feature vectors."""

    data: np.ndarray  # float32, shape (rows, cols, channels), read-only

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise GridError(f"feature matrix must be 3-D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise GridError(f"feature matrix dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise GridError("feature matrix contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def _tile_edges(size: int, parts: int) -> list[tuple[int, int]]:
    # Ceil-division tiling: first blocks get ceil(size/parts), the trailing
    # one takes the remainder.  Starts are clamped so degenerate grids
    # (parts close to size) produce empty trailing intervals, never overlap.
    step = math.ceil(size / parts)
    return [(min(i * step, size), min((i + 1) * step, size)) for i in range(parts)]


@dataclass(frozen=True)
class BlockGrid:
    """Tiling of a rows x cols feature matrix into grid_rows x grid_cols blocks.

    Block extents are (row_start, row_end, col_start, col_end), half-open,
    indexed row-major (block = r * grid_cols + c).
    """

    rows: int
    cols: int
    grid_rows: int = 3
    grid_cols: int = 4
    block_extents: tuple[tuple[int, int, int, int], ...] = field(init=False)

    def __post_init__(self) -> None:
        if self.grid_rows < 1 or self.grid_cols < 1 or self.rows < 1 or self.cols < 1:
            raise GridError("grid and matrix dimensions must be positive")
        if self.grid_rows > self.rows or self.grid_cols > self.cols:
            raise GridError(
                f"grid {self.grid_rows}x{self.grid_cols} exceeds matrix {self.rows}x{self.cols}"
            )
        row_edges = _tile_edges(self.rows, self.grid_rows)
        col_edges = _tile_edges(self.cols, self.grid_cols)
        extents = tuple(
            (r0, r1, c0, c1) for (r0, r1) in row_edges for (c0, c1) in col_edges
        )
        object.__setattr__(self, "block_extents", extents)

    @property
    def block_count(self) -> int:
        return self.grid_rows * self.grid_cols

    def block_position(self, index: int) -> tuple[int, int]:
        """(grid_row, grid_col) of a block index."""
        return divmod(index, self.grid_cols)


def partition_grid(rows: int, cols: int, grid_rows: int = 3, grid_cols: int = 4) -> BlockGrid:
    """Tile a rows x cols feature matrix into a grid of rectangular blocks."""
    return BlockGrid(rows=rows, cols=cols, grid_rows=grid_rows, grid_cols=grid_cols)


@dataclass(frozen=True, order=True)
class BlockSet:
    """Subset of grid blocks as a bitmask (bit i = block i)."""

    block_count: int
    bits: int = 0

    def __post_init__(self) -> None:
        if self.block_count < 1:
            raise GridError("block_count must be positive")
        if self.bits < 0 or self.bits >> self.block_count:
            raise GridError(f"bits 0x{self.bits:x} out of range for {self.block_count} blocks")

    @classmethod
    def from_indices(cls, block_count: int, indices: Sequence[int]) -> "BlockSet":
        bits = 0
        for i in indices:
            if not 0 <= i < block_count:
                raise GridError(f"block index {i} out of range 0..{block_count - 1}")
            bits |= 1 << i
        return cls(block_count, bits)

    @classmethod
    def empty(cls, block_count: int) -> "BlockSet":
        return cls(block_count, 0)

    @classmethod
    def full(cls, block_count: int) -> "BlockSet":
        return cls(block_count, (1 << block_count) - 1)

    @property
    def cardinality(self) -> int:
        return self.bits.bit_count()

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.block_count) if self.bits >> i & 1)

    def contains(self, index: int) -> bool:
        return bool(self.bits >> index & 1)

    def complement(self) -> "BlockSet":
        return BlockSet(self.block_count, self.bits ^ ((1 << self.block_count) - 1))

    def union(self, other: "BlockSet") -> "BlockSet":
        self._check_compatible(other)
        return BlockSet(self.block_count, self.bits | other.bits)

    def intersection(self, other: "BlockSet") -> "BlockSet":
        self._check_compatible(other)
        return BlockSet(self.block_count, self.bits & other.bits)

    def _check_compatible(self, other: "BlockSet") -> None:
        if other.block_count != self.block_count:
            raise GridError("block sets defined over different block counts")

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices())

    def __len__(self) -> int:
        return self.cardinality


def enumerate_block_subsets(block_count: int, n_min: int, n_max: int) -> Iterator[BlockSet]:
    """Yield every block subset with cardinality in [n_min, n_max] exactly once.

    Order is deterministic: ascending cardinality, then ascending bitmask
    value.  Masking every block is disallowed (no unmasked key would remain),
    hence n_max < block_count.
    """
    if not 1 <= n_min <= n_max:
        raise GridError(f"need 1 <= n_min <= n_max, got n_min={n_min}, n_max={n_max}")
    if n_max >= block_count:
        raise GridError(
            f"n_max={n_max} must be < block_count={block_count}: masking all blocks is disallowed"
        )
    for n in range(n_min, n_max + 1):
        masks = sorted(
            sum(1 << i for i in combo) for combo in combinations(range(block_count), n)
        )
        for bits in masks:
            yield BlockSet(block_count, bits)


def block_set_to_feature_mask(block_set: BlockSet, grid: BlockGrid) -> np.ndarray:
    """Boolean rows x cols map, True at positions covered by the set's blocks."""
    if block_set.block_count != grid.block_count:
        raise GridError(
            f"block set over {block_set.block_count} blocks does not match grid with "
            f"{grid.block_count} blocks"
        )
    mask = np.zeros((grid.rows, grid.cols), dtype=bool)
    for i in block_set:
        r0, r1, c0, c1 = grid.block_extents[i]
        mask[r0:r1, c0:c1] = True
    return mask


def block_set_to_pixel_regions(
    block_set: BlockSet, grid: BlockGrid, image_height: int, image_width: int
) -> list[tuple[int, int, int, int]]:
    """Pixel rectangles for the set's blocks under the same ceil-division tiling.

    Rectangles are (row_start, row_end, col_start, col_end), half-open, in
    image coordinates; the full set tiles the image exactly.
    """
    if image_height < 1 or image_width < 1:
        raise GridError("image dimensions must be positive")
    row_edges = _tile_edges(image_height, grid.grid_rows)
    col_edges = _tile_edges(image_width, grid.grid_cols)
    regions = []
    for i in block_set:
        gr, gc = grid.block_position(i)
        r0, r1 = row_edges[gr]
        c0, c1 = col_edges[gc]
        regions.append((r0, r1, c0, c1))
    return regions
