"""
PPM overlays of MATCH-Global identities

Each facet is rendered as an RGB image: the masks of features in stable
tracks take their track's palette color (identical across facets), masks of
unmatched features are grey, everything else is black.
"""

import io
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from PIL import Image

from src.field_io import ScalarField
from src.global_match import GlobalTracks, StabilityClassification, classify_stability, validate_tracks
from src.persistence import Connectivity, PersistenceDiagram, compute_diagram, extract_masks
from src.serialization import atomic_write_bytes

logger = logging.getLogger(__name__)

PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (170, 110, 40),
], dtype=np.uint8)
UNMATCHED_COLOR = np.array((128, 128, 128), dtype=np.uint8)


def track_color(track_id: int) -> np.ndarray:
    return PALETTE[track_id % len(PALETTE)]


def render_facet(field: ScalarField, diagram: PersistenceDiagram, facet: int, tracks: GlobalTracks,
                 stability: StabilityClassification,
                 connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> np.ndarray:
    """
    RGB image (height, width, 3) of one facet

    Masks nest, so they are painted from the latest death to the earliest and
    inner features stay visible on top of the components that contain them.
    """
    image = np.zeros((field.height, field.width, 3), dtype=np.uint8)
    owner = tracks.track_of()
    masks = extract_masks(field, diagram, connectivity)

    order = sorted(range(len(diagram)), key=lambda i: (-diagram[i].death_value, i))
    for index in order:
        vertex = (facet, index)
        if vertex in stability.matched:
            color = track_color(owner[vertex].id)
        else:
            color = UNMATCHED_COLOR
        image[masks[index].mask.bits] = color
    return image


def encode_ppm(image: np.ndarray) -> bytes:
    """Binary P6 encoding of an RGB array"""
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(buffer, format="PPM")
    return buffer.getvalue()


def write_ppm(image: np.ndarray, path: Union[str, Path]) -> Path:
    return atomic_write_bytes(path, encode_ppm(image))


def render_overlays(fields: Sequence[ScalarField], tracks: GlobalTracks, output_dir: Union[str, Path],
                    min_support: Optional[int] = None,
                    connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> List[Path]:
    """
    Write facet_<t>.ppm for every facet

    Raises:
        InconsistentTracksError: tracks do not describe these facets
    """
    diagrams = [compute_diagram(field, connectivity) for field in fields]
    validate_tracks(tracks, diagrams)
    stability = classify_stability(tracks, min_support)

    output_dir = Path(output_dir)
    paths = []
    for t, (field, diagram) in enumerate(zip(fields, diagrams)):
        image = render_facet(field, diagram, t, tracks, stability, connectivity)
        paths.append(write_ppm(image, output_dir / f"facet_{t}.ppm"))

    logger.info(f"Rendered {len(paths)} overlays into {output_dir}")
    return paths
