"""Key masking inside the toy transformer equals deleting the masked tokens.

The encoder adds -1e9 to the attention logits of masked key positions, which
underflows to an exact softmax weight of zero.  With the prediction read off
a dedicated quality token, a masked forward pass is numerically the same as
running the shorter sequence with those tokens removed, and the content of
masked cells cannot influence the score at all.
"""

import numpy as np

from qregion import BlockSet, EncoderConfig, FeatureMatrix, init_weights, partition_grid, predict
from qregion.encoder import TokenSequence, forward, tokenize


def delete_masked(seq: TokenSequence) -> TokenSequence:
    keep = ~seq.mask
    return TokenSequence(
        tokens=seq.tokens[keep],
        positions=tuple(p for p, k in zip(seq.positions, keep) if k),
        mask=np.zeros(int(keep.sum()), dtype=bool),
    )


def main():
    rng = np.random.default_rng(42)
    features = FeatureMatrix(rng.standard_normal((6, 8, 16)).astype(np.float32))
    grid = partition_grid(6, 8)
    config = EncoderConfig(seed=0)
    weights = init_weights(config, channels=16)

    baseline = predict(features, BlockSet.empty(12), weights, config, grid)
    print(f"baseline score (nothing masked): {baseline:.6f}\n")

    print(f"{'masked blocks':<24}{'masked fwd':>12}{'deleted fwd':>13}{'rel diff':>12}")
    for indices in ([0], [3, 7], [0, 1, 2, 3, 4, 5], list(range(11))):
        mask = BlockSet.from_indices(12, indices)
        seq = tokenize(features, weights, mask, grid)
        masked = forward(seq, weights, config)
        deleted = forward(delete_masked(seq), weights, config)
        rel = abs(masked - deleted) / abs(deleted)
        print(f"{str(indices):<24}{masked:>12.6f}{deleted:>13.6f}{rel:>12.2e}")

    mask = BlockSet.from_indices(12, [0, 5])
    before = predict(features, mask, weights, config, grid)
    mutated = features.data.copy()
    mutated[0:2, 0:2] = 1e6  # cells of block 0
    after = predict(FeatureMatrix(mutated), mask, weights, config, grid)
    print(f"\nscore with blocks [0, 5] masked:        {before:.10f}")
    print(f"same, after overwriting block 0 cells: {after:.10f}")
    print(f"bit-identical: {before == after}")

    unmasked_mutation = features.data.copy()
    unmasked_mutation[4:6, 6:8] = 1e6  # cells of block 11, which stays visible
    moved = predict(FeatureMatrix(unmasked_mutation), mask, weights, config, grid)
    print(f"overwriting a visible block instead:   {moved:.10f} (changed)")


if __name__ == "__main__":
    main()
