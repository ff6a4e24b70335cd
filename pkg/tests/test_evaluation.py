"""Correlation statistics, the measure-importance matching metric, and the
zero-region ablation study."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qregion.evaluation import (
    AblationResult,
    MatchResult,
    StatsError,
    ablation_study,
    match_image,
    matching_degree,
    pearson,
    spearman,
    top_half_regions,
    zero_regions,
)
from qregion.features import ImageBuffer
from qregion.grid import BlockSet


class TestPearson:
    def test_hand_derived_value(self):
        # cov = 1.25, var_x = var_y = 1.25 (population), r = 1.25/1.25... the
        # classic 4-point pair: r = 0.8
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-9)

    def test_perfect_and_inverse(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)

    def test_equal_vectors_are_one_even_if_constant(self):
        assert pearson([2.0, 2.0, 2.0], [2.0, 2.0, 2.0]) == 1.0
        assert pearson([2.0, 2.0, 2.0 + 1e-13], [2.0, 2.0, 2.0]) == 1.0

    def test_zero_variance_rejected(self):
        with pytest.raises(StatsError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_short_vectors_rejected(self):
        with pytest.raises(StatsError):
            pearson([1.0, 2.0], [1.0, 2.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(StatsError):
            pearson([1.0, 2.0, 3.0], [1.0, 2.0])

    def test_affine_invariance_on_random_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = rng.integers(3, 12)
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            a = rng.uniform(0.1, 5.0)
            b = rng.uniform(-10.0, 10.0)
            try:
                r = pearson(x, y)
            except StatsError:
                continue
            assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)
            assert pearson(-a * x + b, y) == pytest.approx(-r, abs=1e-9)

    def test_result_clipped_to_unit_interval(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.standard_normal(5)
            assert -1.0 <= pearson(x, x * 3.0 + 1.0) <= 1.0


class TestSpearman:
    def test_monotone_nonlinear_is_one(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [np.exp(v) for v in x]
        assert spearman(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_reversed_is_minus_one(self):
        assert spearman([1, 2, 3, 4], [9, 7, 5, 3]) == pytest.approx(-1.0, abs=1e-12)

    def test_tied_ranks_average(self):
        r = spearman([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
        assert -1.0 <= r <= 1.0


class TestTopHalf:
    def test_picks_highest_means(self):
        top = top_half_regions([0.1, 0.9, 0.4, 0.8, 0.2, 0.7], 3)
        assert top.indices() == (1, 3, 5)

    def test_ties_prefer_lower_index(self):
        top = top_half_regions([0.5, 0.5, 0.5, 0.1], 2)
        assert top.indices() == (0, 1)


class TestMatchImage:
    def test_identical_sets_match_all_thresholds(self):
        important = BlockSet.from_indices(12, [0, 2, 4, 6, 8, 10])
        means = [1.0 if i % 2 == 0 else 0.0 for i in range(12)]
        overlap, matched = match_image(important, means, 5)
        assert overlap == 6 and matched

    def test_complement_sets_never_match(self):
        important = BlockSet.from_indices(12, [0, 1, 2, 3, 4, 5])
        means = [0.0] * 6 + [1.0] * 6
        for t in range(1, 6):
            overlap, matched = match_image(important, means, t)
            assert overlap == 0 and not matched

    def test_strict_inequality_at_threshold(self):
        important = BlockSet.from_indices(12, [0, 1, 2, 3, 4, 5])
        # top half = {0,1,2,3,6,7}: overlap 4
        means = [9, 9, 9, 9, 0, 0, 8, 8, 1, 1, 1, 1]
        overlap, matched3 = match_image(important, means, 3)
        _, matched4 = match_image(important, means, 4)
        assert overlap == 4
        assert matched3 and not matched4

    def test_wrong_cardinality_rejected(self):
        with pytest.raises(StatsError):
            match_image(BlockSet.from_indices(12, [0, 1]), [0.0] * 12, 1)

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_complement_symmetry_on_even_splits(self, data):
        indices = data.draw(
            st.lists(st.integers(0, 11), min_size=6, max_size=6, unique=True)
        )
        means = data.draw(
            st.lists(
                st.floats(0, 1, allow_nan=False, width=32),
                min_size=12,
                max_size=12,
                unique=True,
            )
        )
        important = BlockSet.from_indices(12, indices)
        top = top_half_regions(means, 6)
        bottom = top.complement()
        overlap_top = important.intersection(top).cardinality
        overlap_bottom = important.complement().intersection(bottom).cardinality
        assert overlap_top == overlap_bottom


class TestMatchingDegree:
    def _results(self, overlaps, measure="saliency"):
        return [
            MatchResult(image=f"img{i}", measure=measure, overlap=o, half=6)
            for i, o in enumerate(overlaps)
        ]

    def test_counting_percentage(self):
        results = self._results([6, 4, 0])  # at T=3: matched, matched, not
        assert matching_degree(results, "saliency", 3) == pytest.approx(
            200.0 / 3.0, abs=1e-9
        )

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(2)
        results = self._results(list(rng.integers(0, 7, size=40)))
        degrees = [matching_degree(results, "saliency", t) for t in range(1, 6)]
        assert all(a >= b for a, b in zip(degrees, degrees[1:]))

    def test_filters_by_measure(self):
        results = self._results([6, 6]) + self._results([0, 0], measure="frequency")
        assert matching_degree(results, "saliency", 1) == 100.0
        assert matching_degree(results, "frequency", 1) == 0.0

    def test_unknown_measure_rejected(self):
        with pytest.raises(StatsError):
            matching_degree(self._results([6]), "sharpness", 1)


class TestZeroRegions:
    def test_zeroes_exactly_the_rectangles(self):
        rng = np.random.default_rng(3)
        img = ImageBuffer(pixels=rng.random((10, 12, 3)))
        out = zero_regions(img, [(2, 5, 3, 7)])
        assert np.all(out.pixels[2:5, 3:7] == 0.0)
        mask = np.ones((10, 12), dtype=bool)
        mask[2:5, 3:7] = False
        assert np.array_equal(out.pixels[mask], img.pixels[mask])

    def test_source_untouched(self):
        img = ImageBuffer(pixels=np.full((4, 4, 1), 0.5))
        zero_regions(img, [(0, 4, 0, 4)])
        assert np.all(img.pixels == 0.5)

    def test_out_of_bounds_rejected(self):
        img = ImageBuffer(pixels=np.zeros((4, 4, 1)))
        with pytest.raises(StatsError):
            zero_regions(img, [(0, 5, 0, 4)])


class TestAblation:
    def _images(self, count=5, seed=4):
        rng = np.random.default_rng(seed)
        return [ImageBuffer(pixels=rng.random((8, 8, 1))) for _ in range(count)]

    def test_mean_predictor_oracle(self):
        images = self._images()
        # splitting each image into left (important) and right (trivial)
        splits = [([(0, 8, 0, 4)], [(0, 8, 4, 8)]) for _ in images]

        def mean_score(image):
            return float(image.pixels.mean())

        result = ablation_study(images, mean_score, splits)
        baseline = [mean_score(im) for im in images]
        left_zeroed = [float(im.pixels[:, 4:].mean() / 2) for im in images]
        right_zeroed = [float(im.pixels[:, :4].mean() / 2) for im in images]
        assert result.plcc_pred_vs_zeroed_important == pytest.approx(
            pearson(baseline, left_zeroed), abs=1e-12
        )
        assert result.plcc_pred_vs_zeroed_trivial == pytest.approx(
            pearson(baseline, right_zeroed), abs=1e-12
        )
        assert result.plcc_mos_vs_zeroed_important is None

    def test_with_ground_truth_scores(self):
        images = self._images()
        splits = [([(0, 8, 0, 4)], [(0, 8, 4, 8)]) for _ in images]
        mos = [1.0, 2.0, 3.0, 4.0, 5.0]
        result = ablation_study(images, lambda im: float(im.pixels.mean()), splits, mos)
        assert result.plcc_mos_vs_zeroed_important is not None
        assert -1.0 <= result.plcc_mos_vs_zeroed_important <= 1.0

    def test_needs_three_images(self):
        images = self._images(count=2)
        splits = [([(0, 8, 0, 4)], [(0, 8, 4, 8)])] * 2
        with pytest.raises(StatsError):
            ablation_study(images, lambda im: float(im.pixels.mean()), splits)

    def test_split_count_mismatch_rejected(self):
        images = self._images(count=3)
        with pytest.raises(StatsError):
            ablation_study(images, lambda im: 1.0, [([], [])] * 2)

    def test_result_range_validated(self):
        with pytest.raises(StatsError):
            AblationResult(
                plcc_pred_vs_zeroed_important=1.5,
                plcc_pred_vs_zeroed_trivial=0.0,
            )
