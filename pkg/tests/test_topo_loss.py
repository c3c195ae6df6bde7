"""
Tests for the topological consistency losses and training terms
"""

import math

import numpy as np
import pytest

from src.exceptions import DimensionMismatchError, InconsistentTracksError, InvalidParameterError
from src.field_io import BinaryMask, ScalarField
from src.global_match import StabilityClassification
from src.persistence import PersistenceFeature, compute_diagram, extract_masks
from src.synth import BlobSpec, gen_blobs
from src.topo_loss import (
    FacetGroup,
    LossKind,
    build_loss_report,
    cross_entropy_loss,
    dice_loss,
    ema_update,
    loss_diag,
    loss_intra,
    loss_match,
    loss_temp,
    ramp_up_weight,
    supervised_loss,
    total_loss,
)

LINE = ScalarField(np.array([[0.2, 0.9, 0.1, 0.8, 0.2]]))
# finite feature born at g = 0.4 (pixel (0, 2)), killed at g = 0.5 (pixel (0, 1))
SHORT = ScalarField(np.array([[0.9, 0.5, 0.6, 0.0, 0.0]]))


def group(label, fields, matched=(), unmatched=()):
    diagrams = tuple(compute_diagram(f) for f in fields)
    return FacetGroup(label, tuple(fields), diagrams,
                      StabilityClassification(frozenset(matched), frozenset(unmatched)))


def distinct_field(rng: np.random.Generator, size: int = 12) -> ScalarField:
    count = size * size
    # k / 256 and k / 256 +- 2^-12 are exact in float32
    return ScalarField((rng.permutation(count) + 1).reshape(size, size) / 256.0)


class TestFeatureLosses:

    def test_optimal_feature(self):
        field = ScalarField(np.array([[1.0, 0.0]]))
        term = loss_match(field, PersistenceFeature(0.0, 1.0, (0, 0), (0, 1), False))
        assert term.value == 0.0
        assert all(grad == 0.0 for _, grad in term.gradient)

    def test_line_match_loss(self):
        term = loss_match(LINE, compute_diagram(LINE)[1], facet=2, feature_index=1)
        assert term.value == pytest.approx(0.05)
        assert term.kind is LossKind.MATCH
        assert (term.facet, term.feature) == (2, 1)
        gradient = dict(term.gradient)
        assert gradient[(0, 3)] == pytest.approx(-0.4)
        assert gradient[(0, 2)] == pytest.approx(0.2)

    def test_essential_match_loss(self):
        field = ScalarField(np.full((2, 2), 0.5))
        term = loss_match(field, compute_diagram(field)[0])
        assert term.value == 0.25
        assert [pixel for pixel, _ in term.gradient] == [(0, 0)]

    def test_line_diag_loss(self):
        term = loss_diag(LINE, compute_diagram(LINE)[1])
        assert term.value == pytest.approx(0.49)
        gradient = dict(term.gradient)
        assert gradient[(0, 3)] == pytest.approx(1.4)
        assert gradient[(0, 2)] == pytest.approx(-1.4)

    def test_diagonal_point(self):
        field = ScalarField(np.array([[0.4, 0.4]]))
        assert loss_diag(field, PersistenceFeature(0.6, 0.6, (0, 0), (0, 1), False)).value == 0.0

    def test_diag_is_squared_persistence(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            field = ScalarField(rng.integers(0, 11, size=(10, 10)) / 10.0)
            for feature in compute_diagram(field):
                assert loss_diag(field, feature).value == feature.persistence ** 2

    def test_value_ranges(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            field = ScalarField(rng.random((8, 8)))
            for feature in compute_diagram(field):
                assert 0.0 <= loss_match(field, feature).value <= 2.0
                assert 0.0 <= loss_diag(field, feature).value <= 1.0

    def test_gradient_only_at_critical_pixels(self):
        diagram = compute_diagram(LINE)
        for feature in diagram:
            pixels = {p for p, _ in loss_match(LINE, feature).gradient}
            allowed = {feature.birth_pixel, feature.death_pixel} - {None}
            assert pixels <= allowed


class TestConsistencyLosses:

    def test_optimal_group_is_zero(self):
        bits = np.zeros((8, 8))
        bits[1:3, 1:3] = 1.0
        bits[5:7, 5:7] = 1.0
        field = ScalarField(bits)
        value, _ = loss_intra([FacetGroup.from_fields("img", [field, field])])
        assert value == 0.0

    def test_matched_and_unmatched_terms_add(self):
        value, _ = loss_intra([group("g", [LINE, LINE], matched={(0, 1)}, unmatched={(1, 1)})])
        assert value == pytest.approx(0.54)

    def test_empty_matched_set_contributes_zero(self):
        value, _ = loss_intra([group("g", [LINE, SHORT], unmatched={(0, 1), (1, 1)})])
        assert value == pytest.approx(0.25)

    def test_mean_over_groups(self):
        first = group("a", [LINE, LINE], matched={(0, 1)})
        second = group("b", [LINE, LINE], unmatched={(0, 1)})
        value, _ = loss_intra([first, second])
        assert value == pytest.approx((0.05 + 0.49) / 2)

    def test_temp_equals_intra(self):
        groups = [group("g", [LINE, SHORT], matched={(0, 0), (1, 0)}, unmatched={(0, 1), (1, 1)})]
        assert loss_temp(groups) == loss_intra(groups)

    def test_constant_facets(self):
        field = ScalarField(np.full((5, 5), 0.6))
        snapshots = FacetGroup.from_fields("snap", [field] * 4)
        assert snapshots.stability.matched == frozenset((t, 0) for t in range(4))
        value, _ = loss_temp([snapshots])
        assert value == pytest.approx(0.4 ** 2)

    def test_no_groups(self):
        with pytest.raises(InvalidParameterError):
            loss_intra([])

    def test_group_shapes_must_agree(self):
        with pytest.raises(DimensionMismatchError):
            group("g", [LINE, ScalarField(np.zeros((2, 2)))])

    def test_group_rejects_missing_features(self):
        with pytest.raises(InconsistentTracksError):
            group("g", [LINE, LINE], matched={(0, 5)})
        with pytest.raises(InconsistentTracksError):
            group("g", [LINE, LINE], unmatched={(2, 0)})

    def test_with_fields_keeps_locations(self):
        base = group("g", [LINE, LINE], matched={(0, 1)})
        moved = base.with_fields([ScalarField(np.full((1, 5), 0.5)), LINE])
        assert moved.diagrams == base.diagrams
        assert moved.stability == base.stability

    def test_gradient_matches_finite_differences(self):
        eps = 2.0 ** -12
        rng = np.random.default_rng(4242)
        for _ in range(50):
            fields = [distinct_field(rng), distinct_field(rng)]
            diagrams = tuple(compute_diagram(f) for f in fields)
            vertices = [(t, i) for t, d in enumerate(diagrams) for i in range(len(d))]
            roles = rng.integers(0, 3, size=len(vertices))
            matched = {v for v, r in zip(vertices, roles) if r == 0}
            unmatched = {v for v, r in zip(vertices, roles) if r == 1}
            base = FacetGroup("g", tuple(fields), diagrams,
                              StabilityClassification(frozenset(matched), frozenset(unmatched)))
            _, gradients = loss_intra([base])

            checked = []
            for (label, t), pixels in gradients.items():
                checked.extend((t, pixel) for pixel in pixels)
            checked.append((0, (0, 0)))

            for t, pixel in checked:
                shifted = []
                for sign in (1.0, -1.0):
                    values = fields[t].values.copy()
                    values[pixel] += sign * eps
                    perturbed = list(fields)
                    perturbed[t] = ScalarField(values)
                    shifted.append(loss_intra([base.with_fields(perturbed)])[0])
                numeric = (shifted[0] - shifted[1]) / (2 * eps)
                analytic = gradients.get(("g", t), {}).get(pixel, 0.0)
                assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-8)

    def test_sharpening_reduces_matched_loss(self):
        field = gen_blobs(20, 20, [BlobSpec(0, (10, 10), 0.7, 2.0)])
        losses = []
        for eta in (0.0, 0.05, 0.1, 0.2):
            diagram = compute_diagram(field)
            union = np.zeros(field.shape, dtype=bool)
            for mask in extract_masks(field, diagram):
                union |= mask.mask.bits
            sharpened = ScalarField(np.clip(field.values + eta * union, 0.0, 1.0))
            losses.append(loss_intra([FacetGroup.from_fields("img", [sharpened, sharpened])])[0])
        assert all(later < earlier for earlier, later in zip(losses, losses[1:]))


class TestSupervisedTerms:

    def test_dice_perfect_prediction(self):
        bits = np.array([[1, 0], [1, 1]], dtype=bool)
        assert dice_loss(ScalarField(bits.astype(float)), BinaryMask(bits)) == pytest.approx(0.0, abs=1e-9)

    def test_dice_worst_case(self):
        n = 9
        loss = dice_loss(ScalarField(np.zeros((3, 3))), BinaryMask(np.ones((3, 3), dtype=bool)))
        assert loss == pytest.approx(1 - 1e-6 / (n + 1e-6))

    def test_dice_half(self):
        target = np.zeros((4, 4), dtype=bool)
        target[:2] = True
        loss = dice_loss(ScalarField(np.full((4, 4), 0.5)), BinaryMask(target))
        assert loss == pytest.approx(1 - (2 * 4 + 1e-6) / (8 + 8 + 1e-6))

    def test_dice_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            dice_loss(ScalarField(np.zeros((2, 2))), BinaryMask(np.zeros((2, 3))))

    def test_cross_entropy_perfect(self):
        ones = ScalarField(np.ones((3, 3)))
        assert cross_entropy_loss(ones, ones) == pytest.approx(0.0, abs=1e-6)

    def test_cross_entropy_half(self):
        rng = np.random.default_rng(1)
        target = ScalarField(rng.random((3, 3)))
        assert cross_entropy_loss(ScalarField(np.full((3, 3), 0.5)), target) == pytest.approx(math.log(2))

    def test_cross_entropy_matches_hand_formula(self):
        rng = np.random.default_rng(2)
        pred, target = rng.random((4, 4)), rng.random((4, 4))
        expected = np.mean([-(t * math.log(p) + (1 - t) * math.log(1 - p))
                            for p, t in zip(pred.ravel(), target.ravel())])
        assert cross_entropy_loss(ScalarField(pred), ScalarField(target)) == pytest.approx(expected)

    def test_supervised_loss_weights(self):
        pred = ScalarField(np.array([[0.8, 0.3]]))
        target = BinaryMask(np.array([[True, False]]))
        expected = 0.5 * dice_loss(pred, target) + 0.5 * cross_entropy_loss(pred, target)
        assert supervised_loss(pred, target) == pytest.approx(expected)


class TestSchedules:

    def test_ramp_up_end(self):
        assert ramp_up_weight(100, 100) == 0.1

    def test_ramp_up_start_and_middle(self):
        assert ramp_up_weight(0, 100) == pytest.approx(0.1 * math.exp(-5))
        assert ramp_up_weight(0, 100) == pytest.approx(6.738e-4, rel=1e-3)
        assert ramp_up_weight(50, 100) == pytest.approx(0.02865, rel=1e-3)

    def test_ramp_up_errors(self):
        with pytest.raises(InvalidParameterError):
            ramp_up_weight(101, 100)
        with pytest.raises(InvalidParameterError):
            ramp_up_weight(0, 0)

    def test_ema(self):
        teacher, student = [1.0, 2.0], [3.0, 5.0]
        assert ema_update(teacher, student, 1.0).tolist() == teacher
        assert ema_update(teacher, student, 0.0).tolist() == student
        assert ema_update(teacher, student).tolist() == pytest.approx([1.002, 2.003])

    def test_ema_errors(self):
        with pytest.raises(InvalidParameterError):
            ema_update([1.0], [1.0, 2.0])
        with pytest.raises(InvalidParameterError):
            ema_update([1.0], [1.0], alpha=1.5)


class TestTotalLoss:

    def test_zero(self):
        assert total_loss(0.0, 0.0, 0.0, 0.0) == 0.0

    def test_weighted_sum(self):
        assert total_loss(1.0, 1.0, 1.0, 1.0, lambda_cons=0.1) == pytest.approx(1.102)

    def test_affine_in_each_input(self):
        base = [0.3, 0.2, 0.7, 0.4]
        for position in range(4):
            points = []
            for x in (0.0, 1.0, 2.0):
                args = list(base)
                args[position] = x
                points.append(total_loss(*args, lambda_cons=0.1))
            assert points[2] - points[1] == pytest.approx(points[1] - points[0])

    def test_report_identity_and_ramp(self):
        groups = [group("g", [LINE, LINE], matched={(0, 1)}, unmatched={(1, 1)})]
        report = build_loss_report(intra_groups=groups, temp_groups=groups, l_sup=0.5, l_cons=0.2,
                                   iteration=50, total_iterations=100)
        assert report.lambda_cons == pytest.approx(0.1 * math.exp(-1.25))
        expected = 0.5 + report.lambda_cons * 0.2 + 0.001 * report.l_intra + 0.001 * report.l_temp
        assert report.l_total == expected
        assert report.l_intra == pytest.approx(0.54)

        document = report.to_dict()
        terms = {(entry["term"], entry["facet"], tuple(entry["pixel"])) for entry in document["gradient"]}
        assert ("intra", 0, (0, 3)) in terms and ("temp", 1, (0, 2)) in terms
        assert "gradient" not in report.to_dict(include_gradient=False)

    def test_report_without_groups(self):
        report = build_loss_report(l_sup=1.0)
        assert (report.l_intra, report.l_temp) == (0.0, 0.0)
        assert report.lambda_cons == 0.1
