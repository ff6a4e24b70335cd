"""Block-importance analysis: masked prediction sweeps over subset
combinations, per-block importance indicators, and the even important/trivial
split.

Two indicator modes exist because corpus-level and single-image questions
differ:

* ``dataset_plcc`` correlates masked against baseline predictions across a
  corpus, per subset; a block's score is the mean PLCC over subsets containing
  it, and LOWER means more important (masking it changed predictions more).
* ``image_deviation`` averages |masked - baseline| per subset for one image;
  HIGHER means more important.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from qregion.evaluation import StatsError, pearson
from qregion.grid import BlockGrid, BlockSet, FeatureMatrix, enumerate_block_subsets

__all__ = [
    "ImportanceError",
    "MaskedPredictor",
    "FunctionPredictor",
    "EncoderPredictor",
    "MaskedPredictionTable",
    "ImportanceProfile",
    "masked_prediction_sweep",
    "block_importance_dataset",
    "block_importance_image",
    "split_half",
    "sample_subsets",
    "format_importance_report",
]

MODE_DATASET_PLCC = "dataset_plcc"
MODE_IMAGE_DEVIATION = "image_deviation"


class ImportanceError(ValueError):
    """Invalid sweep inputs or a predictor failure with sweep context."""


class MaskedPredictor(Protocol):
    """Anything that can score one feature matrix under many block masks."""

    def scores_for_masks(
        self, features: FeatureMatrix, grid: BlockGrid, masks: Sequence[BlockSet]
    ) -> np.ndarray: ...


class FunctionPredictor:
    """Adapts a plain (features, mask, grid) -> float callable to the sweep."""

    def __init__(self, fn: Callable[[FeatureMatrix, BlockSet, BlockGrid], float]):
        self._fn = fn

    def scores_for_masks(
        self, features: FeatureMatrix, grid: BlockGrid, masks: Sequence[BlockSet]
    ) -> np.ndarray:
        return np.array([self._fn(features, m, grid) for m in masks], dtype=np.float64)


class EncoderPredictor:
    """Masked encoder as a sweep predictor; tokenizes once per image."""

    def __init__(self, weights, config):
        self.weights = weights
        self.config = config

    def scores_for_masks(
        self, features: FeatureMatrix, grid: BlockGrid, masks: Sequence[BlockSet]
    ) -> np.ndarray:
        from qregion.encoder import predict_masks

        return predict_masks(features, masks, self.weights, self.config, grid)


@dataclass(frozen=True)
class MaskedPredictionTable:
    """Baseline plus per-subset predictions for each image."""

    subsets: tuple[BlockSet, ...]
    baseline: np.ndarray  # (n_images,)
    scores: np.ndarray  # (n_images, n_subsets), column j for subsets[j]
    block_count: int

    def __post_init__(self) -> None:
        if self.scores.shape != (len(self.baseline), len(self.subsets)):
            raise ImportanceError(
                f"scores shape {self.scores.shape} inconsistent with "
                f"{len(self.baseline)} images x {len(self.subsets)} subsets"
            )
        self.baseline.setflags(write=False)
        self.scores.setflags(write=False)

    @property
    def n_images(self) -> int:
        return len(self.baseline)


@dataclass(frozen=True)
class ImportanceProfile:
    """Per-block importance scores and the derived even split."""

    block_scores: np.ndarray
    mode: str
    important: BlockSet
    trivial: BlockSet
    subset_count: int

    def __post_init__(self) -> None:
        self.block_scores.setflags(write=False)
        if self.important.union(self.trivial).cardinality != len(self.block_scores):
            raise ImportanceError("important and trivial must partition the blocks")
        if self.important.intersection(self.trivial).cardinality != 0:
            raise ImportanceError("important and trivial overlap")


def masked_prediction_sweep(
    features_per_image: Sequence[FeatureMatrix],
    predictor: MaskedPredictor,
    grid: BlockGrid,
    subsets: Iterable[BlockSet],
) -> MaskedPredictionTable:
    """Score every (image, subset) pair plus the per-image empty-mask baseline."""
    subsets = tuple(subsets)
    if not features_per_image:
        raise ImportanceError("need at least one image")
    if not subsets:
        raise ImportanceError("need at least one subset")
    for s in subsets:
        if s.block_count != grid.block_count:
            raise ImportanceError(
                f"subset over {s.block_count} blocks does not match grid "
                f"with {grid.block_count}"
            )
        if s.cardinality == 0:
            raise ImportanceError("empty subset not allowed; the baseline covers it")
        if s.cardinality == s.block_count:
            raise ImportanceError("masking all blocks is disallowed")

    empty = BlockSet.empty(grid.block_count)
    baseline = np.empty(len(features_per_image))
    scores = np.empty((len(features_per_image), len(subsets)))
    for i, features in enumerate(features_per_image):
        try:
            baseline[i] = predictor.scores_for_masks(features, grid, [empty])[0]
            scores[i] = predictor.scores_for_masks(features, grid, subsets)
        except ImportanceError:
            raise
        except Exception as exc:
            raise ImportanceError(f"predictor failed on image {i}: {exc}") from exc
    return MaskedPredictionTable(
        subsets=subsets, baseline=baseline, scores=scores, block_count=grid.block_count
    )


def split_half(block_scores: Sequence[float], mode: str) -> tuple[BlockSet, BlockSet]:
    """Even important/trivial partition of blocks by their importance scores.

    dataset_plcc ranks lowest scores as important, image_deviation highest.
    Ties break toward the lower block index; with an odd block count the
    important group takes the extra block.
    """
    scores = np.asarray(block_scores, dtype=np.float64)
    count = len(scores)
    if mode == MODE_DATASET_PLCC:
        order = sorted(range(count), key=lambda i: (scores[i], i))
    elif mode == MODE_IMAGE_DEVIATION:
        order = sorted(range(count), key=lambda i: (-scores[i], i))
    else:
        raise ImportanceError(f"unknown importance mode {mode!r}")
    take = (count + 1) // 2
    important = BlockSet.from_indices(count, order[:take])
    return important, important.complement()


def _mean_over_containing_subsets(
    per_subset: np.ndarray, subsets: Sequence[BlockSet], block_count: int
) -> np.ndarray:
    totals = np.zeros(block_count)
    counts = np.zeros(block_count, dtype=np.int64)
    for value, subset in zip(per_subset, subsets):
        for b in subset:
            totals[b] += value
            counts[b] += 1
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise ImportanceError(f"no subset covers blocks {missing}; widen the sweep")
    return totals / counts


def block_importance_dataset(table: MaskedPredictionTable) -> ImportanceProfile:
    """Corpus-level importance: mean PLCC over the subsets containing each block.

    A low mean PLCC means masking combinations that include the block moved
    predictions most, so the LOWEST-scored half is the important one.
    """
    if table.n_images < 3:
        raise ImportanceError(
            f"dataset PLCC mode needs at least 3 images, got {table.n_images}"
        )
    per_subset = np.empty(len(table.subsets))
    for j in range(len(table.subsets)):
        try:
            per_subset[j] = pearson(table.scores[:, j], table.baseline)
        except StatsError as exc:
            raise ImportanceError(
                f"degenerate variance for subset {sorted(table.subsets[j].indices())}: {exc}"
            ) from exc
    block_scores = _mean_over_containing_subsets(per_subset, table.subsets, table.block_count)
    important, trivial = split_half(block_scores, MODE_DATASET_PLCC)
    return ImportanceProfile(
        block_scores=block_scores,
        mode=MODE_DATASET_PLCC,
        important=important,
        trivial=trivial,
        subset_count=len(table.subsets),
    )


def block_importance_image(
    table: MaskedPredictionTable, image_index: int = 0
) -> ImportanceProfile:
    """Single-image importance: mean |masked - baseline| over covering subsets."""
    if not 0 <= image_index < table.n_images:
        raise ImportanceError(f"image index {image_index} out of range")
    deviations = np.abs(table.scores[image_index] - table.baseline[image_index])
    block_scores = _mean_over_containing_subsets(deviations, table.subsets, table.block_count)
    important, trivial = split_half(block_scores, MODE_IMAGE_DEVIATION)
    return ImportanceProfile(
        block_scores=block_scores,
        mode=MODE_IMAGE_DEVIATION,
        important=important,
        trivial=trivial,
        subset_count=len(table.subsets),
    )


def _unrank_combination(block_count: int, cardinality: int, rank: int) -> int:
    """Bitmask of the rank-th combination in lexicographic index order."""
    bits = 0
    x = 0
    for remaining in range(cardinality, 0, -1):
        while True:
            c = math.comb(block_count - x - 1, remaining - 1)
            if rank < c:
                bits |= 1 << x
                x += 1
                break
            rank -= c
            x += 1
    return bits


def sample_subsets(
    block_count: int, per_cardinality_cap: int, seed: int
) -> list[BlockSet]:
    """Subsets of every cardinality 1..block_count-1, capped per cardinality.

    Cardinalities whose full count fits the cap are enumerated exhaustively;
    larger ones get a seeded uniform sample without replacement.  Output
    order matches enumerate_block_subsets (ascending cardinality, then
    ascending bitmask), so a generous cap reproduces the full sweep exactly.
    """
    if per_cardinality_cap < 1:
        raise ImportanceError("per_cardinality_cap must be >= 1")
    rng = random.Random(seed)
    out: list[BlockSet] = []
    for n in range(1, block_count):
        total = math.comb(block_count, n)
        if total <= per_cardinality_cap:
            out.extend(enumerate_block_subsets(block_count, n, n))
            continue
        ranks = rng.sample(range(total), per_cardinality_cap)
        masks = sorted(_unrank_combination(block_count, n, r) for r in ranks)
        out.extend(BlockSet(block_count, bits) for bits in masks)
    return out


def format_importance_report(profile: ImportanceProfile, grid: BlockGrid) -> str:
    """Delimited importance report: one row per block plus a summary line."""
    if grid.block_count != len(profile.block_scores):
        raise ImportanceError("grid does not match profile block count")
    lines = ["block_index,row,col,score,group"]
    for b, score in enumerate(profile.block_scores):
        row, col = grid.block_position(b)
        group = "important" if profile.important.contains(b) else "trivial"
        lines.append(f"{b},{row},{col},{score:.9g},{group}")
    lines.append(f"# mode={profile.mode} subsets={profile.subset_count}")
    return "\n".join(lines) + "\n"
