"""Correlation statistics, the measure-vs-importance matching metric, and
zero-region ablation studies.

Matching asks: do the top-half regions ranked by a semantic measure coincide
with the half that the masking analysis calls important?  Ablation asks: how
much do predictions move when the pixels of either half are zeroed out?
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from qregion.features import ImageBuffer
from qregion.grid import BlockSet

__all__ = [
    "StatsError",
    "MatchResult",
    "AblationResult",
    "pearson",
    "spearman",
    "top_half_regions",
    "match_image",
    "matching_degree",
    "zero_regions",
    "ablation_study",
]

_EQUAL_TOL = 1e-12


class StatsError(ValueError):
    """Degenerate statistics input (length mismatch, zero variance, empty)."""


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation in [-1, 1].

    Vectors equal within 1e-12 return 1.0 by convention (a perturbation that
    changes nothing carries zero importance); zero variance with unequal
    vectors is an error.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise StatsError(f"length mismatch: {xa.shape} vs {ya.shape}")
    if len(xa) < 3:
        raise StatsError(f"need at least 3 samples, got {len(xa)}")
    if np.max(np.abs(xa - ya)) <= _EQUAL_TOL:
        return 1.0
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    vx = float(xc @ xc) / len(xa)
    vy = float(yc @ yc) / len(ya)
    if vx <= _EQUAL_TOL or vy <= _EQUAL_TOL:
        raise StatsError("zero variance in one of the inputs")
    r = float(xc @ yc) / np.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(np.clip(r, -1.0, 1.0))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank-order correlation: tie-averaged ranks fed through pearson."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise StatsError(f"length mismatch: {xa.shape} vs {ya.shape}")
    return pearson(rankdata(xa), rankdata(ya))


@dataclass(frozen=True)
class MatchResult:
    """Overlap between importance split and a measure's top-half regions."""

    image: str
    measure: str
    overlap: int
    half: int  # size of each group (6 for a 12-block grid)

    def matched(self, threshold: int) -> bool:
        return self.overlap > threshold


def top_half_regions(region_means: Sequence[float], half: int) -> BlockSet:
    """Indices of the `half` regions with highest means; ties favor lower index."""
    means = np.asarray(region_means, dtype=np.float64)
    order = sorted(range(len(means)), key=lambda i: (-means[i], i))
    return BlockSet.from_indices(len(means), order[:half])


def match_image(
    important: BlockSet, measure_region_means: Sequence[float], threshold: int
) -> tuple[int, bool]:
    """Overlap of the important set with the measure's top-half regions.

    Matched means overlap strictly exceeds the threshold.  For even splits
    the complementary (trivial vs bottom-half) overlap is identical, so one
    test covers the two-sided condition.
    """
    count = len(measure_region_means)
    if important.block_count != count:
        raise StatsError(
            f"important set over {important.block_count} blocks, got {count} region means"
        )
    half = count // 2
    if important.cardinality != half:
        raise StatsError(
            f"important set must hold half ({half}) of the regions, has {important.cardinality}"
        )
    top = top_half_regions(measure_region_means, half)
    overlap = important.intersection(top).cardinality
    return overlap, overlap > threshold


def matching_degree(results: Sequence[MatchResult], measure: str, threshold: int) -> float:
    """Percentage of images matched by one measure at one threshold."""
    selected = [r for r in results if r.measure == measure]
    if not selected:
        raise StatsError(f"no match results for measure {measure!r}")
    matched = sum(r.matched(threshold) for r in selected)
    return 100.0 * matched / len(selected)


def zero_regions(
    image: ImageBuffer, regions: Sequence[tuple[int, int, int, int]]
) -> ImageBuffer:
    """Copy of the image with the listed pixel rectangles set to zero.

    Rectangles are (row_start, row_end, col_start, col_end), half-open; the
    zeroing happens post-preprocessing, in every channel.
    """
    pixels = image.pixels.copy()
    for r0, r1, c0, c1 in regions:
        if not (0 <= r0 <= r1 <= image.height and 0 <= c0 <= c1 <= image.width):
            raise StatsError(
                f"region ({r0},{r1},{c0},{c1}) out of bounds for "
                f"{image.height}x{image.width} image"
            )
        pixels[r0:r1, c0:c1, :] = 0.0
    return ImageBuffer(pixels)


@dataclass(frozen=True)
class AblationResult:
    """Correlations between baseline predictions and zero-region predictions."""

    plcc_pred_vs_zeroed_important: float
    plcc_pred_vs_zeroed_trivial: float
    plcc_mos_vs_zeroed_important: float | None = None
    plcc_mos_vs_zeroed_trivial: float | None = None

    def __post_init__(self) -> None:
        for value in (
            self.plcc_pred_vs_zeroed_important,
            self.plcc_pred_vs_zeroed_trivial,
            self.plcc_mos_vs_zeroed_important,
            self.plcc_mos_vs_zeroed_trivial,
        ):
            if value is not None and not -1.0 <= value <= 1.0:
                raise StatsError(f"correlation {value} outside [-1, 1]")


def ablation_study(
    images: Sequence[ImageBuffer],
    predictor: Callable[[ImageBuffer], float],
    region_splits: Sequence[tuple[Sequence[tuple[int, int, int, int]], Sequence[tuple[int, int, int, int]]]],
    mos: Sequence[float] | None = None,
) -> AblationResult:
    """Zero the important and trivial pixel regions of each image and compare.

    ``region_splits`` holds per image the (important, trivial) pixel
    rectangles.  Returns PLCCs of baseline predictions against predictions on
    the two zeroed variants, plus the same against ground-truth scores when
    provided.
    """
    if len(images) < 3:
        raise StatsError(f"ablation needs at least 3 images, got {len(images)}")
    if len(region_splits) != len(images):
        raise StatsError("one (important, trivial) region split required per image")
    if mos is not None and len(mos) != len(images):
        raise StatsError("one ground-truth score required per image when mos is given")

    baseline, zero_imp, zero_triv = [], [], []
    for image, (important_regions, trivial_regions) in zip(images, region_splits):
        baseline.append(predictor(image))
        zero_imp.append(predictor(zero_regions(image, important_regions)))
        zero_triv.append(predictor(zero_regions(image, trivial_regions)))

    return AblationResult(
        plcc_pred_vs_zeroed_important=pearson(baseline, zero_imp),
        plcc_pred_vs_zeroed_trivial=pearson(baseline, zero_triv),
        plcc_mos_vs_zeroed_important=pearson(mos, zero_imp) if mos is not None else None,
        plcc_mos_vs_zeroed_trivial=pearson(mos, zero_triv) if mos is not None else None,
    )
