"""
0-dimensional persistent homology of likelihood maps

This module handles:
- Persistence diagrams of the super-level filtration of a field, computed as
  the sub-level filtration of g = 1 - f with a union-find sweep
- Flood-fill masks of individual features
- Normalized persistence weights

All birth/death values are stored in g-scale, so 0 <= birth <= death <= 1.
Pixels with f = 0 never enter the filtration; every component that survives
the sweep is essential with death 1.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from src.exceptions import EmptyDiagramError, InvalidParameterError, InvariantViolationError
from src.field_io import BinaryMask, ScalarField

logger = logging.getLogger(__name__)

Pixel = Tuple[int, int]


class Connectivity(str, Enum):
    """Pixel adjacency of foreground components"""

    FOUR = "four"
    EIGHT = "eight"

    @classmethod
    def parse(cls, value: Union[str, "Connectivity"]) -> "Connectivity":
        try:
            return cls(value)
        except ValueError:
            raise InvalidParameterError(f"Connectivity must be 'four' or 'eight', got {value!r}")

    @property
    def offsets(self) -> Tuple[Pixel, ...]:
        if self is Connectivity.FOUR:
            return ((-1, 0), (0, -1), (0, 1), (1, 0))
        return ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))

    @property
    def structure(self) -> np.ndarray:
        """scipy.ndimage structuring element for this adjacency"""
        return ndimage.generate_binary_structure(2, 1 if self is Connectivity.FOUR else 2)


@dataclass(frozen=True)
class PersistenceFeature:
    """One 0-dimensional feature: a component born at birth_pixel, killed at death_pixel"""

    birth_value: float
    death_value: float
    birth_pixel: Pixel
    death_pixel: Optional[Pixel]
    essential: bool

    @property
    def persistence(self) -> float:
        return self.death_value - self.birth_value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "b": self.birth_value,
            "d": self.death_value,
            "birth": list(self.birth_pixel),
            "death": list(self.death_pixel) if self.death_pixel is not None else None,
            "essential": self.essential,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PersistenceFeature":
        death = data.get("death")
        return cls(
            birth_value=float(data["b"]),
            death_value=float(data["d"]),
            birth_pixel=(int(data["birth"][0]), int(data["birth"][1])),
            death_pixel=(int(death[0]), int(death[1])) if death is not None else None,
            essential=bool(data["essential"]),
        )


@dataclass(frozen=True)
class PersistenceDiagram:
    """Features of one field, sorted by (birth_value, row-major birth pixel index)"""

    features: Tuple[PersistenceFeature, ...]
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self) -> Iterator[PersistenceFeature]:
        return iter(self.features)

    def __getitem__(self, index: int) -> PersistenceFeature:
        return self.features[index]

    def persistences(self) -> np.ndarray:
        return np.array([feature.persistence for feature in self.features], dtype=np.float64)

    def birth_pixels(self) -> np.ndarray:
        return np.array([feature.birth_pixel for feature in self.features], dtype=np.float64).reshape(-1, 2)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "width": self.width,
            "height": self.height,
            "features": [feature.to_dict() for feature in self.features],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PersistenceDiagram":
        return cls(
            features=tuple(PersistenceFeature.from_dict(item) for item in data["features"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


@dataclass(frozen=True)
class FeatureMask:
    """Flood-fill region of one feature"""

    feature_index: int
    mask: BinaryMask


def _find(parent: np.ndarray, index: int) -> int:
    root = index
    while parent[root] != root:
        root = parent[root]
    # path compression
    while parent[index] != root:
        parent[index], index = root, parent[index]
    return int(root)


def compute_diagram(field: ScalarField, connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> PersistenceDiagram:
    """
    Compute the 0-dimensional persistence diagram of a field

    Pixels are processed in ascending (g, row-major index). A pixel with no
    processed neighbour starts a component; a pixel touching several
    components merges them into the elder one (smaller birth value, then
    smaller birth pixel index) and every younger one dies there. Zero-length
    pairs from plateau merges are dropped, so a plateau yields one feature.
    Only pixels with f > 0 enter the filtration.

    Args:
        field: Likelihood map
        connectivity: "four" or "eight"

    Returns:
        The diagram, never empty
    """
    connectivity = Connectivity.parse(connectivity)
    height, width = field.shape
    g = field.filtration().ravel()
    present = field.values.ravel() > 0.0
    size = g.size

    # stable sort keeps row-major order among equal values
    order = np.argsort(g, kind="stable")
    parent = np.arange(size, dtype=np.int64)
    processed = np.zeros(size, dtype=bool)
    # roots are birth pixels: younger roots are always attached below elder ones
    features: List[PersistenceFeature] = []
    offsets = connectivity.offsets

    for index in order:
        index = int(index)
        # membership is decided on f: likelihoods below ~1e-16 still enter, at g = 1.0
        if not present[index]:
            continue
        value = g[index]
        row, col = divmod(index, width)

        roots = set()
        for dr, dc in offsets:
            r, c = row + dr, col + dc
            if 0 <= r < height and 0 <= c < width:
                neighbour = r * width + c
                if processed[neighbour]:
                    roots.add(_find(parent, neighbour))

        processed[index] = True
        if not roots:
            continue

        elder = min(roots, key=lambda root: (g[root], root))
        parent[index] = elder
        for root in roots:
            if root == elder:
                continue
            parent[root] = elder
            if value > g[root]:
                features.append(PersistenceFeature(
                    birth_value=float(g[root]),
                    death_value=float(value),
                    birth_pixel=divmod(int(root), width),
                    death_pixel=(row, col),
                    essential=False,
                ))

    survivors = [i for i in np.flatnonzero(processed) if parent[i] == i]
    for root in survivors:
        root = int(root)
        features.append(PersistenceFeature(
            birth_value=float(g[root]),
            death_value=1.0,
            birth_pixel=divmod(int(root), width),
            death_pixel=None,
            essential=True,
        ))

    if not features:
        # all-zero field: one degenerate essential feature on the g = 1 plateau
        features.append(PersistenceFeature(1.0, 1.0, (0, 0), None, True))

    features.sort(key=lambda f: (f.birth_value, f.birth_pixel[0] * width + f.birth_pixel[1]))
    diagram = PersistenceDiagram(tuple(features), width=width, height=height)
    logger.info(f"Computed diagram with {len(diagram)} features ({len(survivors)} essential)")
    return diagram


def _region(field: ScalarField, feature: PersistenceFeature) -> np.ndarray:
    # essential features keep every pixel with f > 0, including those whose g rounds to 1.0
    if feature.essential:
        return field.values > 0.0
    return field.filtration() < feature.death_value


def extract_mask(field: ScalarField, feature: PersistenceFeature,
                 connectivity: Union[str, Connectivity] = Connectivity.EIGHT,
                 feature_index: int = 0) -> FeatureMask:
    """
    Flood-fill the region of a feature

    The mask is the connected component of {p : f(p) > 1 - death_value}
    containing the birth pixel, evaluated as g(p) < death_value so the
    comparison uses the very values the diagram was built from. Essential
    features use {p : f(p) > 0}.
    """
    connectivity = Connectivity.parse(connectivity)
    row, col = feature.birth_pixel
    if not (0 <= row < field.height and 0 <= col < field.width):
        raise InvariantViolationError(f"Birth pixel {feature.birth_pixel} lies outside the field")

    if field.values[row, col] <= 0.0:
        # degenerate all-zero field
        return FeatureMask(feature_index, BinaryMask(np.ones(field.shape, dtype=bool)))

    region = _region(field, feature)
    if not region[row, col]:
        raise InvariantViolationError(
            f"Birth pixel {feature.birth_pixel} fails the threshold of feature with death {feature.death_value!r}"
        )

    labels, _ = ndimage.label(region, structure=connectivity.structure)
    return FeatureMask(feature_index, BinaryMask(labels == labels[row, col]))


def extract_masks(field: ScalarField, diagram: PersistenceDiagram,
                  connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> List[FeatureMask]:
    """Masks of every feature in diagram order; one labelling per distinct threshold"""
    connectivity = Connectivity.parse(connectivity)
    labelled: Dict[Optional[float], np.ndarray] = {}
    masks = []

    for index, feature in enumerate(diagram):
        row, col = feature.birth_pixel
        if field.values[row, col] <= 0.0:
            masks.append(extract_mask(field, feature, connectivity, index))
            continue
        key = None if feature.essential else feature.death_value
        if key not in labelled:
            labelled[key], _ = ndimage.label(_region(field, feature), structure=connectivity.structure)
        labels = labelled[key]
        if not labels[row, col]:
            raise InvariantViolationError(
                f"Birth pixel {feature.birth_pixel} of feature {index} fails its own threshold"
            )
        masks.append(FeatureMask(index, BinaryMask(labels == labels[row, col])))

    return masks


def normalize_persistences(persistences: Sequence[float], scale: Optional[float] = None) -> np.ndarray:
    """Divide persistences by scale (default: their maximum); all zeros when the scale is 0"""
    values = np.asarray(persistences, dtype=np.float64)
    top = float(values.max()) if scale is None else float(scale)
    if top <= 0.0:
        return np.zeros_like(values)
    return values / top


def feature_weights(diagram: PersistenceDiagram) -> np.ndarray:
    """
    Normalized persistence weights w_i = pers_i / max_j pers_j

    Raises:
        EmptyDiagramError: the diagram has no features
    """
    if len(diagram) == 0:
        raise EmptyDiagramError("Cannot weight an empty persistence diagram")
    return normalize_persistences(diagram.persistences())
