"""
Dual-level topological consistency losses and the surrounding training terms

This module handles:
- L_match / L_diag per feature, with analytic gradients at the critical pixels
- L_intra / L_temp over groups of facets (one shared kernel)
- L_sup (Dice + cross-entropy), L_cons, the Gaussian ramp-up of lambda_cons,
  the EMA update rule and L_total

P_b and P_d are read in filtration scale g = 1 - f at the critical pixels, and
gradients are taken with respect to the field values f. Critical-pixel
locations are constants of the gradient (stop-gradient on locations).
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import InconsistentTracksError, InvalidParameterError
from src.field_io import BinaryMask, ScalarField, require_same_shape
from src.global_match import StabilityClassification, classify_stability, match_global
from src.persistence import Connectivity, PersistenceDiagram, PersistenceFeature, Pixel

logger = logging.getLogger(__name__)

DICE_EPSILON = 1e-6
CE_EPSILON = 1e-7

# (group label, facet) -> {pixel: d loss / d f(pixel)}
GradientMap = Dict[Tuple[Any, int], Dict[Pixel, float]]


class LossKind(str, Enum):
    MATCH = "match"
    DIAG = "diag"


@dataclass(frozen=True)
class CriticalLossTerm:
    """Loss of one feature with its gradient entries at birth/death pixels"""

    facet: int
    feature: int
    kind: LossKind
    value: float
    gradient: Tuple[Tuple[Pixel, float], ...]


@dataclass(frozen=True)
class FacetGroup:
    """The B facets of one image, with their diagrams and stability classification"""

    label: Any
    fields: Tuple[ScalarField, ...]
    diagrams: Tuple[PersistenceDiagram, ...]
    stability: StabilityClassification

    def __post_init__(self):
        if not self.fields:
            raise InvalidParameterError(f"Facet group {self.label!r} has no facets")
        for other in self.fields[1:]:
            require_same_shape(self.fields[0], other, f"facets of group {self.label!r}")
        if len(self.diagrams) != len(self.fields):
            raise InvalidParameterError(f"Facet group {self.label!r} needs one diagram per facet")
        for t, i in sorted(self.stability.matched | self.stability.unmatched):
            if not (0 <= t < len(self.diagrams) and 0 <= i < len(self.diagrams[t])):
                raise InconsistentTracksError(f"Group {self.label!r} classifies missing feature ({t}, {i})")

    @classmethod
    def from_fields(cls, label: Any, fields: Sequence[ScalarField], tau_primary: float = 0.1,
                    connectivity: Union[str, Connectivity] = Connectivity.EIGHT,
                    min_support: Optional[int] = None) -> "FacetGroup":
        """Run MATCH-Global over the facets and classify by track support"""
        result = match_global(fields, tau_primary, connectivity)
        stability = classify_stability(result.tracks, min_support)
        logger.debug(f"Group {label!r}: {len(stability.matched)} matched, {len(stability.unmatched)} unmatched")
        return cls(label, tuple(fields), result.diagrams, stability)

    def with_fields(self, fields: Sequence[ScalarField]) -> "FacetGroup":
        """Same critical-pixel locations and classification, new field values"""
        return replace(self, fields=tuple(fields))


def _g(field: ScalarField, pixel: Pixel) -> float:
    return 1.0 - float(field.values[pixel])


def loss_match(field: ScalarField, feature: PersistenceFeature, facet: int = 0,
               feature_index: int = 0) -> CriticalLossTerm:
    """
    L_match = g(birth)^2 + (1 - g(death))^2

    Essential features have no death pixel; their death term is evaluated at
    g = 1 and vanishes with zero gradient.
    """
    g_birth = _g(field, feature.birth_pixel)
    value = g_birth ** 2
    gradient = [(feature.birth_pixel, -2.0 * g_birth)]

    if feature.death_pixel is not None:
        g_death = _g(field, feature.death_pixel)
        value += (1.0 - g_death) ** 2
        gradient.append((feature.death_pixel, 2.0 * (1.0 - g_death)))

    return CriticalLossTerm(facet, feature_index, LossKind.MATCH, value, tuple(gradient))


def loss_diag(field: ScalarField, feature: PersistenceFeature, facet: int = 0,
              feature_index: int = 0) -> CriticalLossTerm:
    """L_diag = (g(birth) - g(death))^2, i.e. persistence squared"""
    g_birth = _g(field, feature.birth_pixel)
    g_death = _g(field, feature.death_pixel) if feature.death_pixel is not None else 1.0
    gap = g_birth - g_death
    gradient = [(feature.birth_pixel, -2.0 * gap)]
    if feature.death_pixel is not None:
        gradient.append((feature.death_pixel, 2.0 * gap))
    return CriticalLossTerm(facet, feature_index, LossKind.DIAG, gap ** 2, tuple(gradient))


def _accumulate(gradients: GradientMap, key: Tuple[Any, int], term: CriticalLossTerm, scale: float) -> None:
    bucket = gradients.setdefault(key, {})
    for pixel, grad in term.gradient:
        bucket[pixel] = bucket.get(pixel, 0.0) + scale * grad


def consistency_kernel(groups: Sequence[FacetGroup]) -> Tuple[float, GradientMap]:
    """
    Mean over groups of [mean L_match over matched + mean L_diag over unmatched]

    A mean over an empty set contributes 0. Gradients are scaled by the same
    averaging factors and summed per (group, facet, pixel).
    """
    if not groups:
        raise InvalidParameterError("Consistency losses need at least one facet group")

    total = 0.0
    gradients: GradientMap = {}
    scale_groups = 1.0 / len(groups)

    for group in groups:
        for members, loss_fn in ((group.stability.matched, loss_match), (group.stability.unmatched, loss_diag)):
            if not members:
                continue
            scale = scale_groups / len(members)
            for t, i in sorted(members):
                term = loss_fn(group.fields[t], group.diagrams[t][i], t, i)
                total += scale * term.value
                _accumulate(gradients, (group.label, t), term, scale)

    return total, gradients


def loss_intra(groups: Sequence[FacetGroup]) -> Tuple[float, GradientMap]:
    """Intra-topological consistency over MC-dropout facet groups"""
    return consistency_kernel(groups)


def loss_temp(groups: Sequence[FacetGroup]) -> Tuple[float, GradientMap]:
    """Temporal-topological consistency over training-snapshot facet groups"""
    return consistency_kernel(groups)


def _target_values(target: Union[ScalarField, BinaryMask]) -> np.ndarray:
    if isinstance(target, BinaryMask):
        return target.bits.astype(np.float64)
    return target.values


def dice_loss(pred: ScalarField, target: Union[ScalarField, BinaryMask]) -> float:
    """Soft Dice: 1 - (2 sum(p g) + eps) / (sum p + sum g + eps)"""
    require_same_shape(pred, target, "prediction and target")
    p, g = pred.values, _target_values(target)
    return float(1.0 - (2.0 * np.sum(p * g) + DICE_EPSILON) / (np.sum(p) + np.sum(g) + DICE_EPSILON))


def cross_entropy_loss(pred: ScalarField, target: Union[ScalarField, BinaryMask]) -> float:
    """Mean binary cross-entropy; pred is clamped to [eps, 1 - eps] inside the logarithm only"""
    require_same_shape(pred, target, "prediction and target")
    p = np.clip(pred.values, CE_EPSILON, 1.0 - CE_EPSILON)
    t = _target_values(target)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def supervised_loss(pred: ScalarField, target: Union[ScalarField, BinaryMask],
                    dice_weight: float = 0.5, ce_weight: float = 0.5) -> float:
    """L_sup: weighted Dice + cross-entropy (equal 0.5/0.5 weights by default)"""
    return dice_weight * dice_loss(pred, target) + ce_weight * cross_entropy_loss(pred, target)


def consistency_loss(student: ScalarField, teacher: ScalarField) -> float:
    """L_cons: cross-entropy of the student prediction against the teacher prediction"""
    return cross_entropy_loss(student, teacher)


def ramp_up_weight(iteration: int, total: int, k: float = 0.1) -> float:
    """Gaussian ramp-up k * exp(-5 (1 - iteration / total)^2)"""
    if total <= 0:
        raise InvalidParameterError(f"Total iterations must be positive, got {total}")
    if not 0 <= iteration <= total:
        raise InvalidParameterError(f"Iteration must lie in [0, {total}], got {iteration}")
    return k * math.exp(-5.0 * (1.0 - iteration / total) ** 2)


def ema_update(teacher: Sequence[float], student: Sequence[float], alpha: float = 0.999) -> np.ndarray:
    """Teacher parameters after one EMA step: alpha * teacher + (1 - alpha) * student"""
    teacher = np.asarray(teacher, dtype=np.float64)
    student = np.asarray(student, dtype=np.float64)
    if teacher.shape != student.shape:
        raise InvalidParameterError(f"EMA inputs differ in shape: {teacher.shape} vs {student.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"EMA decay must lie in [0, 1], got {alpha}")
    return alpha * teacher + (1.0 - alpha) * student


def total_loss(l_sup: float, l_cons: float, l_intra: float, l_temp: float,
               lambda_cons: float = 0.1, lambda_intra: float = 0.001, lambda_temp: float = 0.001) -> float:
    """L_total = L_sup + lambda_cons L_cons + lambda_intra L_intra + lambda_temp L_temp"""
    return l_sup + lambda_cons * l_cons + lambda_intra * l_intra + lambda_temp * l_temp


@dataclass(frozen=True)
class LossReport:
    """All scalar terms, the weights used and the sparse topological gradients"""

    l_sup: float
    l_cons: float
    l_intra: float
    l_temp: float
    l_total: float
    lambda_cons: float
    lambda_intra: float
    lambda_temp: float
    intra_gradient: GradientMap
    temp_gradient: GradientMap

    def to_dict(self, include_gradient: bool = True) -> Dict[str, Any]:
        report: Dict[str, Any] = {
            "l_sup": self.l_sup,
            "l_cons": self.l_cons,
            "l_intra": self.l_intra,
            "l_temp": self.l_temp,
            "l_total": self.l_total,
            "lambda_cons": self.lambda_cons,
            "lambda_intra": self.lambda_intra,
            "lambda_temp": self.lambda_temp,
        }
        if include_gradient:
            entries: List[Dict[str, Any]] = []
            for term, gradients in (("intra", self.intra_gradient), ("temp", self.temp_gradient)):
                for (group, facet), pixels in sorted(gradients.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
                    for pixel, grad in sorted(pixels.items()):
                        entries.append({"term": term, "group": group, "facet": facet,
                                        "pixel": list(pixel), "grad": grad})
            report["gradient"] = entries
        return report


def build_loss_report(intra_groups: Sequence[FacetGroup] = (), temp_groups: Sequence[FacetGroup] = (),
                      l_sup: float = 0.0, l_cons: float = 0.0, lambda_cons: Optional[float] = None,
                      lambda_intra: float = 0.001, lambda_temp: float = 0.001,
                      iteration: Optional[int] = None, total_iterations: Optional[int] = None,
                      ramp_k: float = 0.1) -> LossReport:
    """
    Evaluate every term of L_total

    lambda_cons comes from ramp_up_weight(iteration, total_iterations, ramp_k)
    when both are given, else from the explicit value (default ramp_k, the
    end-of-ramp weight). Absent group lists contribute 0.
    """
    if lambda_cons is None:
        if iteration is not None and total_iterations is not None:
            lambda_cons = ramp_up_weight(iteration, total_iterations, ramp_k)
        else:
            lambda_cons = ramp_k

    l_intra, intra_gradient = loss_intra(intra_groups) if intra_groups else (0.0, {})
    l_temp, temp_gradient = loss_temp(temp_groups) if temp_groups else (0.0, {})
    l_total = total_loss(l_sup, l_cons, l_intra, l_temp, lambda_cons, lambda_intra, lambda_temp)

    logger.info(f"L_total={l_total:.6g} (sup={l_sup:.6g}, cons={l_cons:.6g}, "
                f"intra={l_intra:.6g}, temp={l_temp:.6g})")
    return LossReport(l_sup, l_cons, l_intra, l_temp, l_total, lambda_cons, lambda_intra, lambda_temp,
                      intra_gradient, temp_gradient)
