"""
MATCH-Pair: spatially-aware matching of two persistence diagrams

This module handles:
- The similarity matrix S_ij = w1_i * w2_j * IoU(M1_i, M2_j) * (1 - d_ij / d_max)
- Hungarian assignment on the cost 1 - S, padded to a square matrix
- The tau_primary filter on assigned pairs
- The persistence-only 2-Wasserstein baseline, which ignores position
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from src.exceptions import InvalidParameterError
from src.field_io import ScalarField, require_same_shape
from src.persistence import (
    Connectivity,
    FeatureMask,
    PersistenceDiagram,
    compute_diagram,
    extract_masks,
    feature_weights,
)

logger = logging.getLogger(__name__)

# cost of a forbidden cell in the Wasserstein block matrix; real costs are <= 2
_FORBIDDEN = 1.0e6


@dataclass(frozen=True)
class SimilarityMatrix:
    """n1 x n2 similarities; row i is feature i of diagram 1, column j feature j of diagram 2"""

    values: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def to_dict(self) -> Dict[str, Any]:
        return {"shape": list(self.shape), "values": [list(row) for row in self.values]}


@dataclass(frozen=True)
class PairMatch:
    """An accepted correspondence between feature i and feature j"""

    i: int
    j: int
    score: float

    def to_dict(self) -> Dict[str, Any]:
        return {"i": self.i, "j": self.j, "score": self.score}


@dataclass(frozen=True)
class PairMatchResult:
    """One-to-one matches plus the unmatched residue of both diagrams"""

    matches: Tuple[PairMatch, ...]
    unmatched_1: Tuple[int, ...]
    unmatched_2: Tuple[int, ...]
    tau: Optional[float]
    total_cost: Optional[float] = None

    def pairs(self) -> List[Tuple[int, int]]:
        return [(match.i, match.j) for match in self.matches]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "matches": [match.to_dict() for match in self.matches],
            "unmatched_1": list(self.unmatched_1),
            "unmatched_2": list(self.unmatched_2),
            "tau": self.tau,
        }


def _stack_masks(masks: Sequence[FeatureMask]) -> np.ndarray:
    return np.stack([m.mask.bits.ravel() for m in masks]).astype(np.float64)


def similarity_from_masks(masks1: Sequence[FeatureMask], births1: np.ndarray, weights1: np.ndarray,
                          masks2: Sequence[FeatureMask], births2: np.ndarray, weights2: np.ndarray) -> SimilarityMatrix:
    """
    Similarity of two feature sets given their masks, birth pixels and weights

    d_max is taken over all n1 x n2 birth-pixel pairs of this call; when it is
    0 the proximity factor is 1.
    """
    n1, n2 = len(masks1), len(masks2)
    if n1 == 0 or n2 == 0:
        return SimilarityMatrix(np.zeros((n1, n2)))

    stacked1, stacked2 = _stack_masks(masks1), _stack_masks(masks2)
    intersection = stacked1 @ stacked2.T
    union = stacked1.sum(axis=1)[:, None] + stacked2.sum(axis=1)[None, :] - intersection
    iou = np.divide(intersection, union, out=np.zeros_like(intersection), where=union > 0)

    distances = cdist(births1, births2)
    d_max = float(distances.max())
    proximity = 1.0 - distances / d_max if d_max > 0 else np.ones_like(distances)

    weights = np.outer(np.asarray(weights1, dtype=np.float64), np.asarray(weights2, dtype=np.float64))
    return SimilarityMatrix(weights * iou * proximity)


def similarity_matrix(field1: ScalarField, diag1: PersistenceDiagram, field2: ScalarField,
                      diag2: PersistenceDiagram, weights1: Sequence[float], weights2: Sequence[float],
                      connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> SimilarityMatrix:
    """
    MATCH-Pair similarity between the features of two fields

    Args:
        field1, field2: Likelihood maps of equal dimensions
        diag1, diag2: Their persistence diagrams
        weights1, weights2: Per-feature weights aligned with the diagrams
        connectivity: Flood-fill adjacency of the masks

    Returns:
        SimilarityMatrix with every entry in [0, 1]
    """
    require_same_shape(field1, field2, "matched fields")
    if len(weights1) != len(diag1) or len(weights2) != len(diag2):
        raise InvalidParameterError("Weights must align with diagram features")

    masks1 = extract_masks(field1, diag1, connectivity)
    masks2 = extract_masks(field2, diag2, connectivity)
    return similarity_from_masks(masks1, diag1.birth_pixels(), np.asarray(weights1),
                                 masks2, diag2.birth_pixels(), np.asarray(weights2))


def hungarian_assign(cost: np.ndarray, pad_value: float = 1.0) -> List[Tuple[int, int]]:
    """
    Minimum-cost one-to-one assignment of min(n, m) pairs

    A rectangular matrix is padded to a square one with pad_value cells;
    assignments to padding are discarded.

    Args:
        cost: n x m finite cost matrix

    Returns:
        (row, col) pairs sorted by row
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise InvalidParameterError(f"Cost must be a 2D matrix, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise InvalidParameterError("Cost matrix must be finite")

    size = max(n, m)
    padded = np.full((size, size), pad_value, dtype=np.float64)
    padded[:n, :m] = cost
    rows, cols = linear_sum_assignment(padded)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if r < n and c < m]


def assign_and_filter(similarity: SimilarityMatrix, tau: float) -> PairMatchResult:
    """Hungarian assignment on 1 - S, keeping pairs with S > tau"""
    if not 0.0 <= tau <= 1.0:
        raise InvalidParameterError(f"tau_primary must lie in [0, 1], got {tau}")
    values = similarity.values
    n1, n2 = values.shape

    matches = [
        PairMatch(i, j, float(values[i, j]))
        for i, j in hungarian_assign(1.0 - values)
        if values[i, j] > tau
    ]
    matched_1 = {m.i for m in matches}
    matched_2 = {m.j for m in matches}
    return PairMatchResult(
        matches=tuple(matches),
        unmatched_1=tuple(i for i in range(n1) if i not in matched_1),
        unmatched_2=tuple(j for j in range(n2) if j not in matched_2),
        tau=tau,
        total_cost=float(sum(1.0 - m.score for m in matches)),
    )


def match_pair(field1: ScalarField, field2: ScalarField, tau_primary: float = 0.1,
               connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> PairMatchResult:
    """
    MATCH-Pair between two likelihood maps

    Args:
        field1, field2: Likelihood maps of equal dimensions
        tau_primary: Pairs must score strictly above this
        connectivity: Adjacency for diagrams and masks

    Returns:
        PairMatchResult over the features of compute_diagram(field1/field2)
    """
    require_same_shape(field1, field2, "matched fields")
    diag1 = compute_diagram(field1, connectivity)
    diag2 = compute_diagram(field2, connectivity)
    similarity = similarity_matrix(field1, diag1, field2, diag2,
                                   feature_weights(diag1), feature_weights(diag2), connectivity)
    result = assign_and_filter(similarity, tau_primary)
    logger.info(f"MATCH-Pair accepted {len(result.matches)} of {min(len(diag1), len(diag2))} assignable pairs")
    return result


def _diagonal_cost(diagram: PersistenceDiagram) -> np.ndarray:
    """Squared distance of each point to its projection on the diagonal: 2 * ((d - b) / 2)^2"""
    return 2.0 * (diagram.persistences() / 2.0) ** 2


def _wasserstein_assignment(diag1: PersistenceDiagram, diag2: PersistenceDiagram) -> Tuple[List[Tuple[int, int]], float, np.ndarray]:
    n1, n2 = len(diag1), len(diag2)
    points1 = np.array([(f.birth_value, f.death_value) for f in diag1], dtype=np.float64).reshape(-1, 2)
    points2 = np.array([(f.birth_value, f.death_value) for f in diag2], dtype=np.float64).reshape(-1, 2)

    size = n1 + n2
    if size == 0:
        return [], 0.0, np.zeros((0, 0))
    cost = np.zeros((size, size), dtype=np.float64)
    # [points1 x points2 | points1 x diagonal]
    # [diagonal x points2 | diagonal x diagonal (free)]
    pair_cost = cdist(points1, points2, metric="sqeuclidean") if n1 and n2 else np.zeros((n1, n2))
    cost[:n1, :n2] = pair_cost
    cost[:n1, n2:] = _FORBIDDEN
    cost[n1:, :n2] = _FORBIDDEN
    if n1:
        cost[np.arange(n1), n2 + np.arange(n1)] = _diagonal_cost(diag1)
    if n2:
        cost[n1 + np.arange(n2), np.arange(n2)] = _diagonal_cost(diag2)

    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    return [(int(r), int(c)) for r, c in zip(rows, cols)], total, pair_cost


def wasserstein_match(diag1: PersistenceDiagram, diag2: PersistenceDiagram) -> PairMatchResult:
    """
    Persistence-only baseline matching (2-Wasserstein with diagonal padding)

    Each feature is matched either to a feature of the other diagram at cost
    (b1 - b2)^2 + (d1 - d2)^2 or to the diagonal at cost 2 * ((d - b) / 2)^2.
    Position plays no part. Pairs matched off the diagonal are reported with
    their transport cost as score; no tau filter applies.
    """
    n1, n2 = len(diag1), len(diag2)
    assignment, total, pair_cost = _wasserstein_assignment(diag1, diag2)

    matches = [PairMatch(r, c, float(pair_cost[r, c])) for r, c in assignment if r < n1 and c < n2]
    matches.sort(key=lambda m: m.i)
    matched_1 = {m.i for m in matches}
    matched_2 = {m.j for m in matches}
    return PairMatchResult(
        matches=tuple(matches),
        unmatched_1=tuple(i for i in range(n1) if i not in matched_1),
        unmatched_2=tuple(j for j in range(n2) if j not in matched_2),
        tau=None,
        total_cost=total,
    )


def wasserstein_distance(diag1: PersistenceDiagram, diag2: PersistenceDiagram) -> float:
    """2-Wasserstein distance between two diagrams (square root of the optimal cost)"""
    _, total, _ = _wasserstein_assignment(diag1, diag2)
    return float(np.sqrt(total))
