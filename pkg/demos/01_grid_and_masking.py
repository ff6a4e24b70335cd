"""Block grids and block subsets: the combinatorial substrate of everything else.

A feature matrix is tiled into a small grid of rectangular blocks (ceil-sized
leading tiles, smaller trailing remainder).  Subsets of blocks are bitmask
values with set algebra, an exhaustive enumerator, and mappings back to
feature cells and pixel rectangles.
"""

from qregion import (
    BlockSet,
    block_set_to_feature_mask,
    block_set_to_pixel_regions,
    enumerate_block_subsets,
    partition_grid,
)


def show_partition():
    grid = partition_grid(25, 33, 3, 4)
    print("25x33 cells under a 3x4 grid (blocks are row-major):")
    for b, (r0, r1, c0, c1) in enumerate(grid.block_extents):
        print(f"  block {b:2d}: rows [{r0:2d}, {r1:2d})  cols [{c0:2d}, {c1:2d})"
              f"  -> {r1 - r0}x{c1 - c0} cells")
    heights = sorted({r1 - r0 for r0, r1, _, _ in grid.block_extents}, reverse=True)
    widths = sorted({c1 - c0 for _, _, c0, c1 in grid.block_extents}, reverse=True)
    print(f"  distinct tile heights {heights}, widths {widths}")


def show_subsets():
    subsets = list(enumerate_block_subsets(12, 1, 11))
    print(f"\nproper non-empty subsets of 12 blocks: {len(subsets)}")
    print("  first five:", [sorted(s.indices()) for s in subsets[:5]])
    print("  last two:  ", [sorted(s.indices()) for s in subsets[-2:]])

    a = BlockSet.from_indices(12, [0, 1, 5])
    b = BlockSet.from_indices(12, [5, 6])
    print(f"\nset algebra on {sorted(a.indices())} and {sorted(b.indices())}:")
    print("  union       ", sorted(a.union(b).indices()))
    print("  intersection", sorted(a.intersection(b).indices()))
    print("  complement  ", sorted(a.complement().indices()))


def show_mappings():
    grid = partition_grid(6, 8)
    chosen = BlockSet.from_indices(12, [0, 11])
    cells = block_set_to_feature_mask(chosen, grid)
    print(f"\nblocks {sorted(chosen.indices())} cover {int(cells.sum())} of 48 cells")

    regions = block_set_to_pixel_regions(chosen, grid, 192, 256)
    print("pixel rectangles at 192x256 (r0, r1, c0, c1):")
    for rect in regions:
        print("  ", rect)


if __name__ == "__main__":
    show_partition()
    show_subsets()
    show_mappings()
