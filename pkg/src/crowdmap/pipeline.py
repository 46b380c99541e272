"""End-to-end steps shared by the CLI: ingestion and map building."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from crowdmap.aggregate import SemanticLandmarkMap, assemble_map, cluster
from crowdmap.align import AlignmentConfig, AlignmentProblem, AlignmentResult, optimize
from crowdmap.errors import InputError, ServiceError
from crowdmap.geometry import Observation, Point2, Recording
from crowdmap.identify import CategoryTable, identify_label, label_via_service
from crowdmap.io import RecordingInput
from crowdmap.relatedness import (
    EmbeddingClient,
    RelatednessMatrix,
    RelatednessOptions,
    build_matrix,
    find_duplicate_labels,
)
from crowdmap.trajectory import StationaryParams, stationary_position

log = logging.getLogger(__name__)


def _label_for(note, table, endpoint, categories, timeout) -> str | None:
    if endpoint:
        try:
            return label_via_service(note, categories, endpoint, timeout)
        except ServiceError as exc:
            if table is None:
                raise
            log.warning("labeling service failed (%s); falling back to the rule table", exc)
    if table is not None:
        return identify_label(note, table)
    return None


def ingest(
    recordings: Sequence[RecordingInput],
    table: CategoryTable | None = None,
    *,
    endpoint: str | None = None,
    categories: Sequence[str] | None = None,
    params: StationaryParams = StationaryParams(),
    timeout: float | None = None,
) -> list[Observation]:
    """Turn annotated recordings into positioned, labeled observations.

    Annotations without a matching label keep their raw text as the label and
    are marked ``labeled=False``.
    """
    if endpoint and not categories:
        categories = table.labels if table is not None else None
        if not categories:
            raise InputError("the labeling service needs a category list (table or --category)")
    observations: list[Observation] = []
    for rec in recordings:
        obs = []
        for k, ann in enumerate(rec.annotations):
            if not ann.text:
                raise InputError(f"recording {rec.recording_id!r}: annotation {k} has empty text")
            if ann.t is not None:
                rel_t = ann.t
                stamp = (rec.start or 0.0) + ann.t
            else:
                stamp = ann.timestamp
                rel_t = None if rec.start is None else ann.timestamp - rec.start

            if ann.has_position:
                position = Point2(ann.x, ann.y)
            else:
                if rel_t is None:
                    raise InputError(
                        f"recording {rec.recording_id!r}: annotation {k} uses an absolute "
                        "timestamp but the recording has no 'start' to place it on the trajectory"
                    )
                position = stationary_position(rec.trajectory, rel_t, params)

            label = _label_for(ann.text, table, endpoint, categories, timeout)
            obs.append(
                Observation(
                    recording_id=rec.recording_id,
                    obs_index=k,
                    label=label if label is not None else ann.text,
                    position=position,
                    note=ann.text,
                    timestamp=stamp,
                    labeled=label is not None,
                )
            )
        # validates per-recording invariants (non-decreasing timestamps)
        Recording(rec.recording_id, tuple(obs), rec.trajectory)
        observations.extend(obs)
    return observations


@dataclass(frozen=True)
class MapBuild:
    result: AlignmentResult
    landmark_map: SemanticLandmarkMap
    relatedness: RelatednessMatrix
    recording_ids: tuple[str, ...]


def build_map(
    observations: Sequence[Observation],
    provider: str = "exact-id",
    options: RelatednessOptions = RelatednessOptions(),
    config: AlignmentConfig = AlignmentConfig(),
    link_threshold: float = 0.5,
    *,
    flagged_labels: Sequence[str] = (),
    endpoint: str | None = None,
    timeout: float | None = None,
) -> MapBuild:
    if not observations:
        raise InputError("no observations to align")
    client = EmbeddingClient(endpoint, timeout) if provider == "service" and endpoint else None
    duplicated: set[str] = set()
    if options.drop_duplicate_labels:
        duplicated = set(flagged_labels) | find_duplicate_labels(observations)
    relatedness = build_matrix(
        observations, provider, options, flagged_labels=duplicated, endpoint=endpoint, client=client
    )
    problem = AlignmentProblem.from_observations(observations, relatedness)
    result = optimize(problem, config)
    excluded = [k for k, o in enumerate(observations) if o.label in duplicated]
    clusters = cluster(observations, result.transforms, relatedness, link_threshold, excluded)
    return MapBuild(result, assemble_map(clusters), relatedness, problem.recording_ids)
