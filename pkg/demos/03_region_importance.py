"""Which image regions drive the quality prediction?

Sweep every proper non-empty block subset (4094 for a 3x4 grid), mask each
through the encoder, aggregate per-block deviation from the unmasked
baseline, and split the grid into an important and a trivial half.  Writes
the two black-out renders plus the CSV report under demos/output/.
"""

from pathlib import Path

import numpy as np

from qregion import EncoderConfig, extract_builtin, init_weights, partition_grid, sample_subsets
from qregion.dataio import render_masked_image
from qregion.importance import EncoderPredictor, block_importance_image, masked_prediction_sweep, format_importance_report
from qregion.synthetic import generate_image

OUT = Path(__file__).parent / "output"


def main():
    OUT.mkdir(exist_ok=True)
    image = generate_image(seed=11, height=96, width=128)
    features = extract_builtin(image)
    grid = partition_grid(features.rows, features.cols)
    print(f"image 96x128 -> {features.rows}x{features.cols}x{features.channels} features,")
    print(f"3x4 block grid, {grid.block_count} blocks")

    config = EncoderConfig(seed=0)
    weights = init_weights(config, channels=features.channels)
    subsets = sample_subsets(grid.block_count, 924, seed=0)
    print(f"sweeping {len(subsets)} masked subsets...")

    table = masked_prediction_sweep(
        [features], EncoderPredictor(weights, config), grid, subsets
    )
    profile = block_importance_image(table)

    print(f"\nbaseline score: {table.baseline[0]:.6f}")
    print("per-block mean |masked - baseline|, highest half = important:")
    order = np.argsort(-profile.block_scores)
    for b in order:
        group = "important" if profile.important.contains(int(b)) else "trivial"
        r, c = grid.block_position(int(b))
        print(f"  block {b:2d} at ({r},{c}): {profile.block_scores[b]:.6f}  {group}")

    render_masked_image(image, profile.important, grid, OUT / "importance_important.pgm")
    render_masked_image(image, profile.trivial, grid, OUT / "importance_trivial.pgm")
    (OUT / "importance_report.csv").write_text(format_importance_report(profile, grid))
    print(f"\nwrote renders and report to {OUT}/")
    print("CLI equivalent: qregion importance <image> --out demos/output")


if __name__ == "__main__":
    main()
