"""
Topology-wise evaluation of a likelihood map against a ground-truth mask

This module handles:
- 0-dimensional Betti numbers of binary masks
- Sliding-window Betti error (partial border windows included)
- Matched feature error: features left unmatched by MATCH-Pair between the
  prediction and the ground truth, a surrogate for Betti matching error
- Pixel-wise uncertainty across facets and its correlation with errors
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import ndimage, stats

from src.exceptions import InvalidParameterError
from src.field_io import BinaryMask, ScalarField, binarize, mask_to_field, require_same_shape
from src.matching import assign_and_filter, similarity_matrix
from src.persistence import (
    Connectivity,
    PersistenceDiagram,
    compute_diagram,
    feature_weights,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricReport:
    """Betti error and matched feature error of one prediction"""

    betti_error: float
    matched_feature_error: int
    window: int
    stride: int
    threshold: float
    tau: float
    uncertainty_error_correlation: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def betti_number(mask: BinaryMask, connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> int:
    """Number of connected components of the set bits"""
    connectivity = Connectivity.parse(connectivity)
    if not mask.bits.any():
        return 0
    _, count = ndimage.label(mask.bits, structure=connectivity.structure)
    return int(count)


def window_origins(size: int, window: int, stride: int) -> List[int]:
    """Window start offsets along one axis; a partial window covers the far border when needed"""
    origins = list(range(0, size - window + 1, stride))
    if origins[-1] + window < size and origins[-1] + stride < size:
        origins.append(origins[-1] + stride)
    return origins


def betti_error(pred: ScalarField, gt: BinaryMask, window: int = 256, stride: Optional[int] = None,
                threshold: float = 0.5, connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> float:
    """
    Mean absolute difference of Betti numbers over sliding windows

    Args:
        pred: Predicted likelihood map, binarized at threshold (strict >)
        gt: Ground-truth mask
        window: Square window side; may not exceed either image dimension
        stride: Window step, defaults to window (tiling)
        threshold: Binarization threshold

    Returns:
        Mean of |beta0(pred_w) - beta0(gt_w)| over all windows
    """
    require_same_shape(pred, gt, "prediction and ground truth")
    stride = window if stride is None else stride
    if window <= 0 or stride <= 0:
        raise InvalidParameterError(f"Window and stride must be positive, got {window} and {stride}")
    if window > min(pred.width, pred.height):
        raise InvalidParameterError(
            f"Window {window} exceeds the image ({pred.width}x{pred.height}); pass a smaller window"
        )

    pred_bits = binarize(pred, threshold).bits
    gt_bits = gt.bits
    errors = []
    for top in window_origins(pred.height, window, stride):
        for left in window_origins(pred.width, window, stride):
            rows, cols = slice(top, top + window), slice(left, left + window)
            errors.append(abs(
                betti_number(BinaryMask(pred_bits[rows, cols]), connectivity)
                - betti_number(BinaryMask(gt_bits[rows, cols]), connectivity)
            ))

    logger.debug(f"Betti error over {len(errors)} windows of side {window}")
    return float(np.mean(errors))


def _is_degenerate(field: ScalarField, diagram: PersistenceDiagram) -> bool:
    return len(diagram) == 1 and field.values[diagram[0].birth_pixel] <= 0.0


def matched_feature_error(pred: ScalarField, gt_mask: BinaryMask, tau: float = 0.1,
                          connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> int:
    """
    Number of features MATCH-Pair leaves unmatched between prediction and ground truth

    The mask enters as an exact 0/1 field, so every ground-truth component is
    a persistence-1 feature. An all-zero input has no features to mismatch.
    """
    require_same_shape(pred, gt_mask, "prediction and ground truth")
    gt_field = mask_to_field(gt_mask)
    pred_diagram = compute_diagram(pred, connectivity)
    gt_diagram = compute_diagram(gt_field, connectivity)

    pred_degenerate, gt_degenerate = _is_degenerate(pred, pred_diagram), _is_degenerate(gt_field, gt_diagram)
    if pred_degenerate or gt_degenerate:
        return (0 if pred_degenerate else len(pred_diagram)) + (0 if gt_degenerate else len(gt_diagram))

    similarity = similarity_matrix(pred, pred_diagram, gt_field, gt_diagram,
                                   feature_weights(pred_diagram), feature_weights(gt_diagram), connectivity)
    result = assign_and_filter(similarity, tau)
    return len(result.unmatched_1) + len(result.unmatched_2)


def uncertainty_map(facets: Sequence[ScalarField]) -> np.ndarray:
    """Per-pixel variance of the facet likelihoods (population variance)"""
    if not facets:
        raise InvalidParameterError("An uncertainty map needs at least one facet")
    for other in facets[1:]:
        require_same_shape(facets[0], other, "facets")
    return np.var(np.stack([facet.values for facet in facets]), axis=0)


def uncertainty_error_correlation(facets: Sequence[ScalarField], gt: BinaryMask, threshold: float = 0.5) -> float:
    """
    Pearson correlation between the uncertainty map and the binary error map

    The error map marks pixels where the facet mean, binarized at threshold,
    disagrees with gt. The correlation is undefined when either map is
    constant; 0.0 is returned then.
    """
    variance = uncertainty_map(facets)
    require_same_shape(facets[0], gt, "facets and ground truth")
    mean = ScalarField(np.mean(np.stack([facet.values for facet in facets]), axis=0))
    errors = (binarize(mean, threshold).bits != gt.bits).ravel().astype(np.float64)

    if np.ptp(variance) == 0.0 or np.ptp(errors) == 0.0:
        logger.debug("Constant uncertainty or error map, correlation reported as 0")
        return 0.0
    return float(stats.pearsonr(variance.ravel(), errors)[0])


def evaluate_metrics(pred: ScalarField, gt: BinaryMask, window: int = 256, stride: Optional[int] = None,
                     threshold: float = 0.5, tau: float = 0.1,
                     connectivity: Union[str, Connectivity] = Connectivity.EIGHT,
                     facets: Optional[Sequence[ScalarField]] = None) -> MetricReport:
    """Both topological metrics for one prediction, plus the uncertainty correlation when facets are given"""
    stride = window if stride is None else stride
    report = MetricReport(
        betti_error=betti_error(pred, gt, window, stride, threshold, connectivity),
        matched_feature_error=matched_feature_error(pred, gt, tau, connectivity),
        window=window,
        stride=stride,
        threshold=threshold,
        tau=tau,
        uncertainty_error_correlation=(
            uncertainty_error_correlation(facets, gt, threshold) if facets else None
        ),
    )
    logger.info(f"Betti error {report.betti_error:.6g}, matched feature error {report.matched_feature_error}")
    return report
