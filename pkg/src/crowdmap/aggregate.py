"""Group aligned observations into landmarks and build the semantic map."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from crowdmap.align import shared_frame_positions
from crowdmap.errors import InputError
from crowdmap.geometry import Observation, Point2, RigidTransform2
from crowdmap.relatedness import DUPLICATE_SEPARATION, RelatednessMatrix

FRAME_NOTE = (
    "Shared frame: the first recording's coordinate system (its transform is the identity); "
    "units are meters."
)


@dataclass(frozen=True)
class LandmarkCluster:
    member_indices: tuple[int, ...]
    label: str
    position: Point2
    notes: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.member_indices:
            raise InputError("a cluster needs at least one member")


@dataclass(frozen=True)
class SemanticLandmarkMap:
    clusters: tuple[LandmarkCluster, ...]
    frame_note: str = FRAME_NOTE


def lower_median(values) -> float:
    """Median; for an even count the lower of the two middle values."""
    ordered = np.sort(np.asarray(values, dtype=float))
    return float(ordered[(len(ordered) - 1) // 2])


def median_position(xy: np.ndarray) -> Point2:
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    return Point2(lower_median(xy[:, 0]), lower_median(xy[:, 1]))


def canonical_label(labels: Iterable[str]) -> str:
    counts = Counter(labels)
    top = max(counts.values())
    return min(label for label, c in counts.items() if c == top)


def _make_cluster(members, observations, shared_xy) -> LandmarkCluster:
    members = tuple(sorted(members))
    notes = sorted(
        ((observations[k].note, observations[k].timestamp) for k in members),
        key=lambda item: (item[1], item[0]),
    )
    return LandmarkCluster(
        member_indices=members,
        label=canonical_label(observations[k].label for k in members),
        position=median_position(shared_xy[list(members)]),
        notes=tuple(notes),
    )


def cluster(
    observations: Sequence[Observation],
    transforms: Mapping[str, RigidTransform2],
    relatedness: RelatednessMatrix,
    link_threshold: float = 0.5,
    excluded: Iterable[int] = (),
    attach_radius: float = DUPLICATE_SEPARATION,
) -> list[LandmarkCluster]:
    """Connected components of the graph with an edge wherever S >= link_threshold.

    ``excluded`` marks observations that were left out of the alignment
    (duplicated labels). They are attached afterwards, in index order, to the
    nearest cluster carrying the same label within ``attach_radius``; failing
    that they start a cluster of their own.
    """
    if not 0.0 < link_threshold <= 1.0:
        raise InputError(f"link_threshold must lie in (0, 1], got {link_threshold}")
    n = len(observations)
    if relatedness.n != n:
        raise InputError("relatedness size does not match the observations")
    if n == 0:
        return []
    shared = shared_frame_positions(observations, transforms)
    excluded = sorted(set(excluded))

    adjacency = csr_matrix(relatedness.values >= link_threshold)
    _, component = connected_components(adjacency, directed=False)
    groups: dict[int, list[int]] = {}
    skip = set(excluded)
    for k in range(n):
        if k not in skip:
            groups.setdefault(int(component[k]), []).append(k)
    # order clusters by their smallest member
    members_list = sorted(groups.values(), key=lambda m: m[0])

    labels = [o.label for o in observations]
    for k in excluded:
        best, best_dist = None, attach_radius
        for g, members in enumerate(members_list):
            if canonical_label(labels[m] for m in members) != labels[k]:
                continue
            centre = median_position(shared[members]).as_array()
            dist = float(np.linalg.norm(shared[k] - centre))
            if dist <= best_dist and (best is None or dist < best_dist):
                best, best_dist = g, dist
        if best is None:
            members_list.append([k])
        else:
            members_list[best].append(k)

    return [_make_cluster(m, observations, shared) for m in members_list]


def assemble_map(clusters: Sequence[LandmarkCluster], frame_note: str = FRAME_NOTE) -> SemanticLandmarkMap:
    """Finalize clusters into a map ordered by label, then position."""
    ordered = sorted(
        clusters,
        key=lambda c: (c.label, c.position.x, c.position.y, c.member_indices),
    )
    return SemanticLandmarkMap(tuple(ordered), frame_note)
