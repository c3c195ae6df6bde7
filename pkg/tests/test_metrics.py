"""
Tests for Betti error and matched feature error
"""

import numpy as np
import pytest

from src.exceptions import DimensionMismatchError, InvalidParameterError
from src.field_io import BinaryMask, ScalarField, mask_to_field
from src.metrics import (
    betti_error,
    betti_number,
    evaluate_metrics,
    matched_feature_error,
    uncertainty_error_correlation,
    uncertainty_map,
    window_origins,
)
from tests.oracles import flood_fill_count


def squares(shape, *corners, side=2):
    bits = np.zeros(shape, dtype=bool)
    for row, col in corners:
        bits[row:row + side, col:col + side] = True
    return bits


class TestBettiNumber:

    def test_empty_mask(self):
        assert betti_number(BinaryMask(np.zeros((4, 4), dtype=bool))) == 0

    def test_two_squares(self):
        assert betti_number(BinaryMask(squares((8, 8), (1, 1), (5, 5)))) == 2

    def test_diagonal_contact_depends_on_connectivity(self):
        bits = np.array([[True, False], [False, True]])
        assert betti_number(BinaryMask(bits), "eight") == 1
        assert betti_number(BinaryMask(bits), "four") == 2

    def test_matches_flood_fill(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            bits = rng.random((16, 16)) < 0.35
            eight = bool(rng.integers(0, 2))
            assert betti_number(BinaryMask(bits), "eight" if eight else "four") == flood_fill_count(bits, eight)

    def test_invariant_under_rotation_and_transpose(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            bits = rng.random((12, 9)) < 0.4
            expected = betti_number(BinaryMask(bits))
            assert betti_number(BinaryMask(np.rot90(bits))) == expected
            assert betti_number(BinaryMask(bits.T)) == expected


class TestWindowOrigins:

    def test_tiling(self):
        assert window_origins(8, 4, 4) == [0, 4]

    def test_partial_border_window(self):
        assert window_origins(10, 4, 4) == [0, 4, 8]
        assert window_origins(10, 8, 8) == [0, 8]

    def test_no_window_past_the_border(self):
        assert window_origins(10, 3, 5) == [0, 5]


class TestBettiError:

    def test_identical_prediction(self):
        gt = BinaryMask(squares((8, 8), (1, 1), (5, 5)))
        assert betti_error(mask_to_field(gt), gt, window=8) == 0.0

    def test_random_masks_against_themselves(self):
        rng = np.random.default_rng(76)
        for _ in range(50):
            gt = BinaryMask(rng.random((20, 20)) < 0.4)
            assert betti_error(mask_to_field(gt), gt, window=8, stride=4) == 0.0

    def test_extra_component(self):
        gt = BinaryMask(squares((8, 8), (1, 1)))
        pred = mask_to_field(BinaryMask(squares((8, 8), (1, 1), (5, 5))))
        assert betti_error(pred, gt, window=8) == 1.0

    def test_mean_over_windows(self):
        pred_bits = squares((8, 16), (1, 1), (5, 5), (1, 9), (5, 13))
        gt_bits = squares((8, 16), (1, 1), (5, 5))
        pred_bits[3, 13] = True
        pred_bits[6, 10] = True
        # left window: 2 vs 2, right window: 4 vs 0
        assert betti_error(mask_to_field(BinaryMask(pred_bits)), BinaryMask(gt_bits), window=8) == 2.0

    def test_threshold_is_strict(self):
        gt = BinaryMask(np.zeros((4, 4), dtype=bool))
        pred = ScalarField(np.full((4, 4), 0.5))
        assert betti_error(pred, gt, window=4, threshold=0.5) == 0.0
        assert betti_error(pred, gt, window=4, threshold=0.4) == 1.0

    def test_partial_windows_are_counted(self):
        pred_bits = np.zeros((10, 10), dtype=bool)
        pred_bits[9, 9] = True
        gt = BinaryMask(np.zeros((10, 10), dtype=bool))
        assert betti_error(mask_to_field(BinaryMask(pred_bits)), gt, window=8) == 0.25

    def test_window_larger_than_image(self):
        gt = BinaryMask(np.zeros((8, 12), dtype=bool))
        with pytest.raises(InvalidParameterError):
            betti_error(mask_to_field(gt), gt, window=10)

    def test_non_positive_window(self):
        gt = BinaryMask(np.zeros((8, 8), dtype=bool))
        with pytest.raises(InvalidParameterError):
            betti_error(mask_to_field(gt), gt, window=0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            betti_error(ScalarField(np.zeros((4, 4))), BinaryMask(np.zeros((4, 5), dtype=bool)), window=4)


class TestMatchedFeatureError:

    def test_identical_inputs(self):
        gt = BinaryMask(squares((12, 12), (1, 1), (7, 7)))
        assert matched_feature_error(mask_to_field(gt), gt) == 0

    def test_tiny_likelihood_component_counts_as_a_feature(self):
        pred = ScalarField(np.array([[1e-20, 0.0], [0.0, 0.0]]))
        empty = BinaryMask(np.zeros((2, 2), dtype=bool))
        assert matched_feature_error(pred, empty) == 1
        assert matched_feature_error(ScalarField(np.zeros((2, 2))), empty) == 0

    def test_spurious_and_missing_components(self):
        one = BinaryMask(squares((12, 12), (1, 1)))
        two = BinaryMask(squares((12, 12), (1, 1), (7, 7)))
        assert matched_feature_error(mask_to_field(two), one) == 1
        assert matched_feature_error(mask_to_field(one), two) == 1

    def test_empty_ground_truth(self):
        gt = BinaryMask(np.zeros((6, 6), dtype=bool))
        pred = mask_to_field(BinaryMask(squares((6, 6), (0, 0), (4, 4))))
        assert matched_feature_error(pred, gt) == 2
        assert matched_feature_error(mask_to_field(gt), gt) == 0

    def test_random_masks_match_themselves(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            gt = BinaryMask(rng.random((14, 14)) < 0.3)
            assert matched_feature_error(mask_to_field(gt), gt) == 0


class TestEvaluateMetrics:

    def test_report(self):
        gt = BinaryMask(squares((8, 8), (1, 1)))
        pred = mask_to_field(BinaryMask(squares((8, 8), (1, 1), (5, 5))))
        report = evaluate_metrics(pred, gt, window=4)
        assert report.stride == 4
        assert report.matched_feature_error == 1
        assert report.betti_error == 0.25
        assert report.to_dict() == {"betti_error": 0.25, "matched_feature_error": 1, "window": 4,
                                    "stride": 4, "threshold": 0.5, "tau": 0.1,
                                    "uncertainty_error_correlation": None}

    def test_report_with_facets(self):
        gt = BinaryMask(np.array([[True, True, False, True]]))
        facets = [ScalarField(np.array([[1.0, 1.0, 0.0, 0.75]])), ScalarField(np.array([[1.0, 1.0, 0.0, 0.25]]))]
        report = evaluate_metrics(mask_to_field(gt), gt, window=1, facets=facets)
        assert report.uncertainty_error_correlation == pytest.approx(1.0)


class TestUncertainty:

    FACETS = [ScalarField(np.array([[1.0, 1.0, 0.0, 0.75]])), ScalarField(np.array([[1.0, 1.0, 0.0, 0.25]]))]

    def test_map_is_pixel_variance(self):
        assert uncertainty_map(self.FACETS).tolist() == [[0.0, 0.0, 0.0, 0.0625]]
        single = uncertainty_map([ScalarField(np.full((2, 2), 0.3))])
        assert single.shape == (2, 2) and not single.any()

    def test_uncertain_pixel_is_the_error(self):
        gt = BinaryMask(np.array([[True, True, False, True]]))
        assert uncertainty_error_correlation(self.FACETS, gt) == pytest.approx(1.0)

    def test_error_away_from_uncertainty(self):
        # errors [0, 1, 0, 0] against variance [0, 0, 0, v]
        gt = BinaryMask(np.array([[True, False, False, False]]))
        assert uncertainty_error_correlation(self.FACETS, gt) == pytest.approx(-1.0 / 3.0)

    def test_constant_maps_give_zero(self):
        same = [self.FACETS[0], self.FACETS[0]]
        gt = BinaryMask(np.array([[True, False, False, False]]))
        assert uncertainty_error_correlation(same, gt) == 0.0
        perfect = BinaryMask(np.array([[True, True, False, False]]))
        assert uncertainty_error_correlation(self.FACETS, perfect) == 0.0

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            uncertainty_map([])
        with pytest.raises(DimensionMismatchError):
            uncertainty_map([self.FACETS[0], ScalarField(np.zeros((2, 2)))])
        with pytest.raises(DimensionMismatchError):
            uncertainty_error_correlation(self.FACETS, BinaryMask(np.zeros((2, 2))))
