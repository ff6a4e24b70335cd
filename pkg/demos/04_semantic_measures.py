"""Three pixel-wise semantic measures and their fusion.

Saliency comes from the spectral-residual method, the frequency measure
weights a 10-band radial decomposition by a contrast sensitivity function,
and objectness is a proxy built from saliency, a center prior, and gradient
coherence (an externally computed map can replace it).  All four maps land
in demos/output/ as both raw SMP floats and viewable PGMs.
"""

from pathlib import Path

from qregion import band_decompose, frequency_measure, fuse_average, objectness, region_means, spectral_residual_saliency
from qregion.grid import BlockSet, block_set_to_pixel_regions, partition_grid
from qregion.measures import csf_peak_frequency, csf_weight, export_measure_map, export_measure_pgm
from qregion.synthetic import generate_image

OUT = Path(__file__).parent / "output"


def main():
    OUT.mkdir(exist_ok=True)
    image = generate_image(seed=21, height=96, width=128)

    saliency = spectral_residual_saliency(image)
    bands = band_decompose(image, pixels_per_degree=100.0)
    frequency = frequency_measure(bands)
    objects = objectness(image)
    averaged = fuse_average([saliency, frequency, objects])

    print("contrast sensitivity, 10 band centers (c/deg) and weights:")
    centers = bands.band_centers()
    weights = csf_weight(centers)
    for f, w in zip(centers, weights):
        bar = "#" * int(round(w * 40))
        print(f"  {f:5.2f}: {w:.3f} {bar}")
    print(f"CSF peaks at {csf_peak_frequency():.2f} c/deg\n")

    grid = partition_grid(3, 4)
    rects = block_set_to_pixel_regions(BlockSet.full(12), grid, image.height, image.width)
    print(f"{'measure':<12}" + "".join(f"  blk{b:<4d}" for b in range(0, 12, 3)))
    for m in (saliency, frequency, objects, averaged):
        means = region_means(m, rects)
        cells = "".join(f"  {means[b]:.3f} " for b in range(0, 12, 3))
        print(f"{m.kind:<12}{cells}")
        export_measure_map(m, OUT / f"measure_{m.kind}.smp")
        export_measure_pgm(m, OUT / f"measure_{m.kind}.pgm")

    total = sum((bands.responses[k] ** 2).sum() for k in range(10))
    top = max(range(10), key=lambda k: (bands.responses[k] ** 2).sum())
    print(f"\nband energies: strongest bin {top} "
          f"({bands.band_edges[top]:.0f}-{bands.band_edges[top + 1]:.0f} c/deg), "
          f"total {total:.3e}")
    print(f"wrote 8 files to {OUT}/")
    print("CLI equivalent: qregion measures <image> --out demos/output")


if __name__ == "__main__":
    main()
