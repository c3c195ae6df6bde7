"""
Synthetic likelihood maps with ground-truth identities

This module handles:
- Gaussian blob fields (optionally with compact support)
- Seeded perturbations standing in for MC-dropout facets and training snapshots
- Facet sets with per-facet truth labelling of persistence features
- Identity purity of MATCH-Global tracks
- The two-blob swap scenario where persistence alone cannot tell blobs apart

Every generator is a pure function of its parameters and seed; random draws
come from numpy's PCG64 generator (np.random.default_rng).
"""

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import InvalidParameterError
from src.field_io import ScalarField
from src.global_match import GlobalTracks
from src.persistence import Connectivity, PersistenceDiagram, compute_diagram

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64

# feature index -> blob id (None for noise-born features)
FeatureTruth = Dict[int, Optional[int]]


@dataclass(frozen=True)
class BlobSpec:
    """Gaussian blob: amplitude * exp(-|p - center|^2 / (2 radius^2))"""

    id: int
    center: Tuple[float, float]
    amplitude: float
    radius: float

    def __post_init__(self):
        if not 0.0 < self.amplitude <= 1.0:
            raise InvalidParameterError(f"Blob {self.id}: amplitude must lie in (0, 1], got {self.amplitude}")
        if not self.radius > 0.0:
            raise InvalidParameterError(f"Blob {self.id}: radius must be positive, got {self.radius}")

    def shifted(self, rows: float, cols: float) -> "BlobSpec":
        return BlobSpec(self.id, (self.center[0] + rows, self.center[1] + cols), self.amplitude, self.radius)

    def to_dict(self) -> Dict[str, Any]:
        return {"id": self.id, "center": list(self.center), "amplitude": self.amplitude, "radius": self.radius}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BlobSpec":
        try:
            return cls(int(data["id"]), (float(data["center"][0]), float(data["center"][1])),
                       float(data["amplitude"]), float(data["radius"]))
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise InvalidParameterError(f"Malformed blob spec {data!r}: {e}") from e


def gen_blobs(width: int, height: int, blobs: Sequence[BlobSpec], background: float = 0.0,
              cutoff: Optional[float] = None) -> ScalarField:
    """
    Render blobs over a constant background, clamped to [0, 1]

    Args:
        width, height: Image dimensions
        blobs: Blob specs with centers inside the image
        background: Constant added everywhere
        cutoff: Support radius in units of the blob radius; None keeps the
            exact Gaussian (whose tails only vanish by floating-point underflow)
    """
    if width < 1 or height < 1:
        raise InvalidParameterError(f"Image dimensions must be positive, got {width}x{height}")
    if not 0.0 <= background <= 1.0:
        raise InvalidParameterError(f"Background must lie in [0, 1], got {background}")
    if cutoff is not None and cutoff <= 0:
        raise InvalidParameterError(f"Cutoff must be positive, got {cutoff}")

    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    values = np.full((height, width), float(background))
    for blob in blobs:
        row, col = blob.center
        if not (0 <= row <= height - 1 and 0 <= col <= width - 1):
            raise InvalidParameterError(f"Blob {blob.id} center {blob.center} lies outside {width}x{height}")
        squared = (rows - row) ** 2 + (cols - col) ** 2
        contribution = blob.amplitude * np.exp(-squared / (2.0 * blob.radius ** 2))
        if cutoff is not None:
            contribution[squared > (cutoff * blob.radius) ** 2] = 0.0
        values += contribution

    return ScalarField(np.clip(values, 0.0, 1.0))


def random_blobs(width: int, height: int, count: int, seed: int,
                 amplitude_range: Tuple[float, float] = (0.8, 1.0),
                 radius_range: Tuple[float, float] = (2.5, 3.0),
                 min_separation: float = 18.0, margin: int = 4,
                 max_attempts: int = 10000) -> List[BlobSpec]:
    """Seeded layout of `count` blobs at integer centers, pairwise at least min_separation apart"""
    _check_seed(seed)
    rng = np.random.default_rng(seed)
    if width <= 2 * margin or height <= 2 * margin:
        raise InvalidParameterError(f"Margin {margin} leaves no room in a {width}x{height} image")

    centers: List[Tuple[int, int]] = []
    attempts = 0
    while len(centers) < count:
        attempts += 1
        if attempts > max_attempts:
            raise InvalidParameterError(
                f"Could not place {count} blobs {min_separation} apart in {width}x{height}"
            )
        candidate = (int(rng.integers(margin, height - margin)), int(rng.integers(margin, width - margin)))
        if all(np.hypot(candidate[0] - r, candidate[1] - c) >= min_separation for r, c in centers):
            centers.append(candidate)

    return [
        BlobSpec(k, (float(r), float(c)), float(rng.uniform(*amplitude_range)), float(rng.uniform(*radius_range)))
        for k, (r, c) in enumerate(centers)
    ]


# Perturbations


@dataclass(frozen=True)
class GaussianNoise:
    """Additive zero-mean Gaussian noise"""

    sigma: float
    kind: str = field(default="gaussian_noise", init=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidParameterError(f"Noise sigma must be non-negative, got {self.sigma}")

    def apply(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.sigma == 0:
            return values
        return values + rng.normal(0.0, self.sigma, size=values.shape)


@dataclass(frozen=True)
class PatchDropout:
    """Zero a random fraction of the non-overlapping patch x patch tiles"""

    rate: float
    patch: int
    kind: str = field(default="patch_dropout", init=False)

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise InvalidParameterError(f"Dropout rate must lie in [0, 1], got {self.rate}")
        if self.patch < 1:
            raise InvalidParameterError(f"Patch size must be positive, got {self.patch}")

    def apply(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        height, width = values.shape
        tiles = [(r, c) for r in range(0, height, self.patch) for c in range(0, width, self.patch)]
        dropped = int(round(self.rate * len(tiles)))
        out = values.copy()
        for k in rng.choice(len(tiles), size=dropped, replace=False):
            r, c = tiles[int(k)]
            out[r:r + self.patch, c:c + self.patch] = 0.0
        return out


@dataclass(frozen=True)
class AmplitudeJitter:
    """Scale the whole field by a factor drawn uniformly from [1 - |delta|, 1 + |delta|]"""

    delta: float
    kind: str = field(default="amplitude_jitter", init=False)

    def __post_init__(self):
        if not abs(self.delta) < 1.0:
            raise InvalidParameterError(f"Amplitude jitter must satisfy |delta| < 1, got {self.delta}")

    def apply(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        spread = abs(self.delta)
        return values * (1.0 + rng.uniform(-spread, spread))


@dataclass(frozen=True)
class Translate:
    """Integer shift by dx columns and dy rows; uncovered pixels become 0"""

    dx: int
    dy: int
    kind: str = field(default="translate", init=False)

    def apply(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        height, width = values.shape
        out = np.zeros_like(values)
        if abs(self.dy) >= height or abs(self.dx) >= width:
            return out
        src_rows = slice(max(0, -self.dy), height - max(0, self.dy))
        dst_rows = slice(max(0, self.dy), height - max(0, -self.dy))
        src_cols = slice(max(0, -self.dx), width - max(0, self.dx))
        dst_cols = slice(max(0, self.dx), width - max(0, -self.dx))
        out[dst_rows, dst_cols] = values[src_rows, src_cols]
        return out


Perturbation = Union[GaussianNoise, PatchDropout, AmplitudeJitter, Translate]

_PERTURBATIONS = {
    "gaussian_noise": (GaussianNoise, ("sigma",)),
    "patch_dropout": (PatchDropout, ("rate", "patch")),
    "amplitude_jitter": (AmplitudeJitter, ("delta",)),
    "translate": (Translate, ("dx", "dy")),
}


def parse_perturbation(data: Dict[str, Any]) -> Perturbation:
    """Build a perturbation from its JSON descriptor, e.g. {"kind": "gaussian_noise", "sigma": 0.05}"""
    kind = data.get("kind") if isinstance(data, dict) else None
    if kind not in _PERTURBATIONS:
        raise InvalidParameterError(f"Unknown perturbation kind {kind!r}; expected one of {sorted(_PERTURBATIONS)}")
    cls, params = _PERTURBATIONS[kind]
    try:
        if cls is Translate:
            return Translate(int(data["dx"]), int(data["dy"]))
        if cls is PatchDropout:
            return PatchDropout(float(data["rate"]), int(data["patch"]))
        return cls(*(float(data[name]) for name in params))
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidParameterError(f"Perturbation {kind} needs {', '.join(params)}: {e}") from e


def perturbation_to_dict(perturbation: Perturbation) -> Dict[str, Any]:
    data = asdict(perturbation)
    return {"kind": data.pop("kind"), **data}


def _check_seed(seed: int) -> None:
    if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < MAX_SEED:
        raise InvalidParameterError(f"Seed must be an unsigned 64-bit integer, got {seed!r}")


def perturb(field: ScalarField, kind: Union[Perturbation, Dict[str, Any]], seed: int) -> ScalarField:
    """Apply one perturbation with a fresh generator seeded by `seed`; the result is clamped to [0, 1]"""
    _check_seed(seed)
    if isinstance(kind, dict):
        kind = parse_perturbation(kind)
    rng = np.random.default_rng(int(seed))
    return ScalarField(np.clip(kind.apply(field.values, rng), 0.0, 1.0))


def derive_seed(seed: int, *path: int) -> int:
    """Independent 64-bit child seed for (seed, *path)"""
    return int(np.random.SeedSequence([int(seed), *path]).generate_state(1, dtype=np.uint64)[0])


# Facet sets and identity scoring


@dataclass(frozen=True)
class FacetProvenance:
    perturbations: Tuple[Perturbation, ...]
    seeds: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "perturbations": [perturbation_to_dict(p) for p in self.perturbations],
            "seeds": list(self.seeds),
        }


@dataclass(frozen=True)
class FacetSet:
    """Base field, its perturbed facets, their provenance and feature truth"""

    base: ScalarField
    facets: Tuple[ScalarField, ...]
    provenance: Tuple[FacetProvenance, ...]
    truth: Tuple[FeatureTruth, ...]
    blobs: Tuple[BlobSpec, ...] = ()
    diagrams: Tuple[PersistenceDiagram, ...] = ()

    def __post_init__(self):
        for facet in self.facets:
            if facet.shape != self.base.shape:
                raise InvalidParameterError("All facets must share the base dimensions")


def label_features(diagram: PersistenceDiagram, blobs: Sequence[BlobSpec]) -> FeatureTruth:
    """
    Assign each feature the blob whose center is nearest its birth pixel

    Features farther than 2 * radius + 1 pixels from that center are noise-born (None).
    """
    truth: FeatureTruth = {}
    for index, feature in enumerate(diagram):
        truth[index] = None
        if not blobs or feature.birth_value >= 1.0:
            continue
        row, col = feature.birth_pixel
        distances = [np.hypot(row - b.center[0], col - b.center[1]) for b in blobs]
        nearest = int(np.argmin(distances))
        if distances[nearest] <= 2.0 * blobs[nearest].radius + 1.0:
            truth[index] = blobs[nearest].id
    return truth


def _translation(perturbations: Sequence[Perturbation]) -> Tuple[int, int]:
    rows = sum(p.dy for p in perturbations if isinstance(p, Translate))
    cols = sum(p.dx for p in perturbations if isinstance(p, Translate))
    return rows, cols


def make_facet_set(blobs: Sequence[BlobSpec], width: int, height: int, facets: int = 4,
                   perturbations: Sequence[Perturbation] = (GaussianNoise(0.05),), seed: int = 0,
                   background: float = 0.0, cutoff: Optional[float] = None,
                   connectivity: Union[str, Connectivity] = Connectivity.EIGHT) -> FacetSet:
    """
    Render blobs once and derive `facets` perturbed copies

    Perturbation k of facet t draws from derive_seed(seed, t, k). Translations
    move the truth centers with the field.
    """
    if facets < 1:
        raise InvalidParameterError(f"Need at least one facet, got {facets}")
    _check_seed(seed)
    base = gen_blobs(width, height, blobs, background, cutoff)

    fields, provenance, truth, diagrams = [], [], [], []
    for t in range(facets):
        current = base
        seeds = []
        for k, perturbation in enumerate(perturbations):
            child = derive_seed(seed, t, k)
            current = perturb(current, perturbation, child)
            seeds.append(child)
        diagram = compute_diagram(current, connectivity)
        rows, cols = _translation(perturbations)
        fields.append(current)
        provenance.append(FacetProvenance(tuple(perturbations), tuple(seeds)))
        truth.append(label_features(diagram, [b.shifted(rows, cols) for b in blobs]))
        diagrams.append(diagram)

    logger.debug(f"Built {facets} facets of {len(blobs)} blobs (seed {seed})")
    return FacetSet(base, tuple(fields), tuple(provenance), tuple(truth), tuple(blobs), tuple(diagrams))


def identity_purity(tracks: GlobalTracks, truth: FacetSet) -> float:
    """
    Share of track members carrying their track's majority blob id

    Singleton tracks are pure. In longer tracks noise-born members never
    count, and a track with no labelled member is entirely impure. Majority
    ties go to the smallest blob id.
    """
    pure = total = 0
    for track in tracks.tracks:
        labels = [truth.truth[t].get(i) for t, i in track.members]
        total += len(labels)
        if len(labels) == 1:
            pure += 1
            continue
        counts = Counter(label for label in labels if label is not None)
        if not counts:
            continue
        majority = min(counts, key=lambda label: (-counts[label], label))
        pure += counts[majority]
    return pure / total if total else 1.0


class SwapScenario(NamedTuple):
    field1: ScalarField
    field2: ScalarField
    correspondence: List[Tuple[int, int]]


SWAP_SIZE = 40
SWAP_AMPLITUDE = 0.9
SWAP_RADIUS = 2.5
SWAP_CUTOFF = 3.0


def swap_scenario(seed: int) -> SwapScenario:
    """
    Two fields with two equally persistent blobs at positions A and B

    Both blobs peak at exactly SWAP_AMPLITUDE on integer centers and have
    compact support, so every feature of both fields is the essential point
    (1 - SWAP_AMPLITUDE, 1). Field 2 jitters radii and shifts the blobs by at
    most two pixels; true pairs overlap and false pairs never do. On odd
    seeds the row-major order of A and B flips in field 2, so any pairing by
    diagram index is right for exactly one parity.

    Returns:
        (field1, field2, [(i, j), ...]) with the true pairs in diagram indices
    """
    _check_seed(seed)
    rng = np.random.default_rng(seed)

    row_a = int(rng.integers(12, 28))
    col_a = int(rng.integers(7, 10))
    col_b = int(rng.integers(30, 33))
    first = [BlobSpec(0, (row_a, col_a), SWAP_AMPLITUDE, SWAP_RADIUS),
             BlobSpec(1, (row_a + 1, col_b), SWAP_AMPLITUDE, SWAP_RADIUS)]

    shift_rows = int(rng.integers(-1, 2))
    flip = 2 if seed % 2 else 0
    radii = SWAP_RADIUS * (1.0 + rng.uniform(-0.1, 0.1, size=2))
    cols = rng.integers(-1, 2, size=2)
    second = [BlobSpec(0, (row_a + flip + shift_rows, col_a + int(cols[0])), SWAP_AMPLITUDE, float(radii[0])),
              BlobSpec(1, (row_a + 1 + shift_rows, col_b + int(cols[1])), SWAP_AMPLITUDE, float(radii[1]))]

    field1 = gen_blobs(SWAP_SIZE, SWAP_SIZE, first, cutoff=SWAP_CUTOFF)
    field2 = gen_blobs(SWAP_SIZE, SWAP_SIZE, second, cutoff=SWAP_CUTOFF)
    truth1 = label_features(compute_diagram(field1), first)
    truth2 = label_features(compute_diagram(field2), second)

    by_blob = {blob_id: j for j, blob_id in truth2.items() if blob_id is not None}
    correspondence = sorted((i, by_blob[blob_id]) for i, blob_id in truth1.items() if blob_id in by_blob)
    return SwapScenario(field1, field2, correspondence)
