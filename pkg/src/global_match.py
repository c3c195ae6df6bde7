"""
MATCH-Global: facet-spanning identities from chained pairwise matches

This module handles:
- Persistence weights normalized over all facets at once
- Sequential MATCH-Pair assignment between adjacent facets (t, t+1)
- The facet graph and its breadth-first connected components (tracks)
- Stable/transient classification by track support, and the fixed
  persistence-threshold baseline it replaces
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from src.exceptions import (
    EmptyDiagramError,
    InconsistentTracksError,
    InvalidParameterError,
)
from src.field_io import ScalarField, require_same_shape
from src.matching import PairMatchResult, assign_and_filter, similarity_from_masks
from src.parallel import parallel_map
from src.persistence import (
    Connectivity,
    FeatureMask,
    PersistenceDiagram,
    compute_diagram,
    extract_masks,
    normalize_persistences,
)

logger = logging.getLogger(__name__)

Vertex = Tuple[int, int]


@dataclass(frozen=True)
class FacetGraph:
    """Vertices (t, i); edges only between consecutive facets"""

    vertices: Tuple[Vertex, ...]
    edges: Tuple[Tuple[Vertex, Vertex], ...]

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.vertices)
        graph.add_edges_from(self.edges)
        return graph

    def to_dict(self) -> Dict[str, Any]:
        return {"edges": [[list(u), list(v)] for u, v in self.edges]}


@dataclass(frozen=True)
class Track:
    """One global identity: at most one feature per facet"""

    id: int
    members: Tuple[Vertex, ...]

    @property
    def support(self) -> int:
        return len({t for t, _ in self.members})

    def to_dict(self) -> Dict[str, Any]:
        return {"id": self.id, "members": [list(v) for v in self.members], "support": self.support}


@dataclass(frozen=True)
class GlobalTracks:
    """Partition of the facet-graph vertices into tracks"""

    tracks: Tuple[Track, ...]
    n_facets: int

    def track_of(self) -> Dict[Vertex, Track]:
        return {member: track for track in self.tracks for member in track.members}

    def to_dict(self, min_support: Optional[int] = None) -> Dict[str, Any]:
        return {
            "n_facets": self.n_facets,
            "tracks": [track.to_dict() for track in self.tracks],
            "min_support": min_support,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GlobalTracks":
        try:
            tracks = tuple(
                Track(int(item["id"]), tuple((int(t), int(i)) for t, i in item["members"]))
                for item in data["tracks"]
            )
            n_facets = data.get("n_facets")
            if n_facets is None:
                n_facets = 1 + max((t for track in tracks for t, _ in track.members), default=0)
        except (KeyError, TypeError, ValueError) as e:
            raise InconsistentTracksError(f"Malformed tracks document: {e}") from e
        return cls(tracks, int(n_facets))


@dataclass(frozen=True)
class StabilityClassification:
    """Stable (matched) vs transient (unmatched) features"""

    matched: FrozenSet[Vertex]
    unmatched: FrozenSet[Vertex]
    min_support: Optional[int] = None
    persistence_threshold: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "matched": [list(v) for v in sorted(self.matched)],
            "unmatched": [list(v) for v in sorted(self.unmatched)],
            "min_support": self.min_support,
        }


@dataclass(frozen=True)
class GlobalMatchResult:
    """Everything MATCH-Global derives from a facet list"""

    graph: FacetGraph
    tracks: GlobalTracks
    diagrams: Tuple[PersistenceDiagram, ...]
    pair_results: Tuple[PairMatchResult, ...] = field(default=())


def global_weights(diagrams: Sequence[PersistenceDiagram]) -> List[np.ndarray]:
    """
    Persistence weights normalized by the maximum persistence over all facets

    Raises:
        EmptyDiagramError: no facet holds any feature
    """
    if not diagrams or all(len(d) == 0 for d in diagrams):
        raise EmptyDiagramError("Global weights need at least one feature across the facets")
    top = max(float(d.persistences().max()) for d in diagrams if len(d))
    return [normalize_persistences(d.persistences(), scale=top) if len(d) else np.zeros(0) for d in diagrams]


def match_adjacent(masks: Sequence[Sequence[FeatureMask]], diagrams: Sequence[PersistenceDiagram],
                   weights: Sequence[np.ndarray], tau_primary: float,
                   threads: Optional[int] = None) -> List[PairMatchResult]:
    """MATCH-Pair assignment for every adjacent facet pair, d_max taken per pair"""

    def match(t: int) -> PairMatchResult:
        similarity = similarity_from_masks(
            masks[t], diagrams[t].birth_pixels(), weights[t],
            masks[t + 1], diagrams[t + 1].birth_pixels(), weights[t + 1],
        )
        return assign_and_filter(similarity, tau_primary)

    return parallel_map(match, range(len(diagrams) - 1), threads)


def connected_tracks(graph: FacetGraph, n_facets: int) -> GlobalTracks:
    """Tracks as breadth-first connected components, ordered by their smallest member"""
    components = [tuple(sorted(c)) for c in nx.connected_components(graph.to_networkx())]
    components.sort()
    return GlobalTracks(tuple(Track(k, members) for k, members in enumerate(components)), n_facets)


def match_global(fields: Sequence[ScalarField], tau_primary: float = 0.1,
                 connectivity: Union[str, Connectivity] = Connectivity.EIGHT,
                 threads: Optional[int] = None) -> GlobalMatchResult:
    """
    MATCH-Global over T >= 2 facets

    Args:
        fields: Facet likelihood maps sharing dimensions, in facet order
        tau_primary: Edge acceptance threshold on adjacent-pair similarity
        connectivity: Adjacency for diagrams and masks
        threads: Worker cap for per-facet and per-pair work

    Returns:
        GlobalMatchResult holding the facet graph, tracks and diagrams
    """
    if len(fields) < 2:
        raise InvalidParameterError(f"MATCH-Global needs at least 2 facets, got {len(fields)}")
    for other in fields[1:]:
        require_same_shape(fields[0], other, "facets")
    connectivity = Connectivity.parse(connectivity)

    diagrams = parallel_map(lambda f: compute_diagram(f, connectivity), fields, threads)
    masks = parallel_map(lambda pair: extract_masks(pair[0], pair[1], connectivity),
                         list(zip(fields, diagrams)), threads)
    weights = global_weights(diagrams)
    pair_results = match_adjacent(masks, diagrams, weights, tau_primary, threads)

    vertices = tuple((t, i) for t, diagram in enumerate(diagrams) for i in range(len(diagram)))
    edges = tuple(((t, m.i), (t + 1, m.j)) for t, result in enumerate(pair_results) for m in result.matches)
    graph = FacetGraph(vertices, edges)
    tracks = connected_tracks(graph, len(fields))

    logger.info(f"MATCH-Global linked {len(vertices)} features over {len(fields)} facets "
                f"into {len(tracks.tracks)} tracks ({len(edges)} edges)")
    return GlobalMatchResult(graph, tracks, tuple(diagrams), tuple(pair_results))


def default_min_support(n_facets: int) -> int:
    """ceil(3T/4): three of four facets"""
    return max(1, math.ceil(3 * n_facets / 4))


def classify_stability(tracks: GlobalTracks, min_support: Optional[int] = None) -> StabilityClassification:
    """
    Split features into matched (track support >= min_support) and unmatched

    Args:
        tracks: MATCH-Global tracks
        min_support: Required number of facets, 1..T; defaults to ceil(3T/4)
    """
    if min_support is None:
        min_support = default_min_support(tracks.n_facets)
    if not 1 <= min_support <= tracks.n_facets:
        raise InvalidParameterError(f"min_support must lie in [1, {tracks.n_facets}], got {min_support}")

    matched, unmatched = set(), set()
    for track in tracks.tracks:
        (matched if track.support >= min_support else unmatched).update(track.members)
    return StabilityClassification(frozenset(matched), frozenset(unmatched), min_support)


def classify_by_persistence(diagrams: Sequence[PersistenceDiagram], phi: float = 0.7) -> StabilityClassification:
    """Fixed-threshold baseline: a feature is stable iff its persistence >= phi"""
    if not 0.0 <= phi <= 1.0:
        raise InvalidParameterError(f"Persistence threshold must lie in [0, 1], got {phi}")
    matched, unmatched = set(), set()
    for t, diagram in enumerate(diagrams):
        for i, feature in enumerate(diagram):
            (matched if feature.persistence >= phi else unmatched).add((t, i))
    return StabilityClassification(frozenset(matched), frozenset(unmatched), None, phi)


def validate_tracks(tracks: GlobalTracks, diagrams: Sequence[PersistenceDiagram]) -> None:
    """Raise InconsistentTracksError unless every member names an existing facet feature"""
    if tracks.n_facets != len(diagrams):
        raise InconsistentTracksError(f"Tracks span {tracks.n_facets} facets but {len(diagrams)} were given")
    seen = set()
    for track in tracks.tracks:
        for t, i in track.members:
            if not 0 <= t < len(diagrams) or not 0 <= i < len(diagrams[t]):
                raise InconsistentTracksError(f"Track {track.id} references missing feature ({t}, {i})")
            if (t, i) in seen:
                raise InconsistentTracksError(f"Feature ({t}, {i}) belongs to more than one track")
            seen.add((t, i))
