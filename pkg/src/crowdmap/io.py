"""On-disk formats: recordings / observations as JSONL, maps and ground truth as JSON."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from crowdmap.aggregate import LandmarkCluster, SemanticLandmarkMap
from crowdmap.align import AlignmentResult
from crowdmap.errors import InputError
from crowdmap.evaluate import GroundTruth
from crowdmap.geometry import (
    Observation,
    Point2,
    TrajectorySample,
    format_timestamp,
    parse_timestamp,
    validate_trajectory,
)


@dataclass(frozen=True)
class Annotation:
    text: str
    t: float | None = None  # seconds since recording start
    timestamp: float | None = None  # epoch seconds
    x: float | None = None
    y: float | None = None

    @property
    def has_position(self) -> bool:
        return self.x is not None and self.y is not None


@dataclass(frozen=True)
class RecordingInput:
    """One line of a recordings file, before labels and positions are derived."""

    recording_id: str
    annotations: tuple[Annotation, ...]
    trajectory: tuple[TrajectorySample, ...] | None = None
    start: float | None = None  # epoch seconds of t = 0, optional
    line: int = 0


def _iter_json_lines(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise InputError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise InputError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def read_recordings(path: str | Path) -> list[RecordingInput]:
    out = []
    for lineno, rec in _iter_json_lines(path):
        where = f"{path}:{lineno}"
        rid = rec.get("recording_id")
        if not isinstance(rid, str) or not rid:
            raise InputError(f"{where}: recording_id must be a non-empty string")

        trajectory = None
        if rec.get("trajectory") is not None:
            try:
                trajectory = tuple(
                    TrajectorySample(
                        _number(s["t"], where), _number(s["x"], where), _number(s["y"], where)
                    )
                    for s in rec["trajectory"]
                )
                validate_trajectory(trajectory)
            except (KeyError, TypeError) as exc:
                raise InputError(f"{where}: trajectory samples need t, x, y") from exc
            except InputError as exc:
                raise InputError(f"{where}: {exc}") from exc

        start = None
        if rec.get("start") is not None:
            try:
                start = parse_timestamp(rec["start"])
            except InputError as exc:
                raise InputError(f"{where}: {exc}") from exc

        annotations = []
        for a in rec.get("annotations") or []:
            if not isinstance(a, dict) or not isinstance(a.get("text"), str):
                raise InputError(f"{where}: every annotation needs a text string")
            t = _number(a["t"], where) if a.get("t") is not None else None
            stamp = None
            if a.get("timestamp") is not None:
                try:
                    stamp = parse_timestamp(a["timestamp"])
                except InputError as exc:
                    raise InputError(f"{where}: {exc}") from exc
            if t is None and stamp is None:
                raise InputError(f"{where}: annotation needs 't' or 'timestamp'")
            x = _number(a["x"], where) if a.get("x") is not None else None
            y = _number(a["y"], where) if a.get("y") is not None else None
            if (x is None) != (y is None):
                raise InputError(f"{where}: annotation must give both x and y or neither")
            if x is None and trajectory is None:
                raise InputError(f"{where}: annotation has no position and the recording no trajectory")
            annotations.append(Annotation(a["text"], t, stamp, x, y))
        out.append(RecordingInput(rid, tuple(annotations), trajectory, start, lineno))
    return out


def observation_to_json(o: Observation) -> dict:
    return {
        "recording_id": o.recording_id,
        "obs_index": o.obs_index,
        "label": o.label,
        "labeled": o.labeled,
        "x": o.position.x,
        "y": o.position.y,
        "note": o.note,
        "timestamp": format_timestamp(o.timestamp),
    }


def write_observations(observations: Iterable[Observation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in observations:
            fh.write(json.dumps(observation_to_json(o)) + "\n")


def read_observations(path: str | Path) -> list[Observation]:
    out = []
    for lineno, rec in _iter_json_lines(path):
        where = f"{path}:{lineno}"
        try:
            out.append(
                Observation(
                    recording_id=str(rec["recording_id"]),
                    obs_index=int(rec.get("obs_index", len(out))),
                    label=str(rec["label"]),
                    position=Point2(_number(rec["x"], where), _number(rec["y"], where)),
                    note=str(rec.get("note", "")),
                    timestamp=parse_timestamp(rec["timestamp"]) if rec.get("timestamp") else 0.0,
                    labeled=bool(rec.get("labeled", True)),
                )
            )
        except KeyError as exc:
            raise InputError(f"{where}: missing field {exc.args[0]!r}") from exc
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from exc
    return out


def map_to_json(landmark_map: SemanticLandmarkMap) -> dict:
    clusters = sorted(landmark_map.clusters, key=lambda c: (c.label, c.position.x, c.position.y))
    return {
        "frame_note": landmark_map.frame_note,
        "landmarks": [
            {
                "label": c.label,
                "x": c.position.x,
                "y": c.position.y,
                "notes": [{"text": text, "timestamp": format_timestamp(ts)} for text, ts in c.notes],
                "members": list(c.member_indices),
            }
            for c in clusters
        ],
    }


def map_from_json(data: dict) -> SemanticLandmarkMap:
    if not isinstance(data, dict) or not isinstance(data.get("landmarks"), list):
        raise InputError("map JSON needs a 'landmarks' list")
    clusters = []
    for k, lm in enumerate(data["landmarks"]):
        try:
            clusters.append(
                LandmarkCluster(
                    member_indices=tuple(lm.get("members") or (k,)),
                    label=str(lm["label"]),
                    position=Point2(_number(lm["x"], "map"), _number(lm["y"], "map")),
                    notes=tuple(
                        (str(n["text"]), parse_timestamp(n["timestamp"])) for n in lm.get("notes", [])
                    ),
                )
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"map landmark {k} is malformed") from exc
    return SemanticLandmarkMap(tuple(clusters), str(data.get("frame_note", "")))


def write_map(landmark_map: SemanticLandmarkMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(map_to_json(landmark_map), indent=2) + "\n", encoding="utf-8")


def _load_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def read_map(path: str | Path) -> SemanticLandmarkMap:
    try:
        return map_from_json(_load_json(path))
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc


def read_ground_truth(path: str | Path) -> GroundTruth:
    """``{"landmarks": [{"id": str, "x": m, "y": m}, ...]}``"""
    data = _load_json(path)
    try:
        return GroundTruth(
            tuple(
                (str(lm["id"]), Point2(_number(lm["x"], str(path)), _number(lm["y"], str(path))))
                for lm in data["landmarks"]
            )
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: ground truth needs landmarks with id, x, y") from exc


def write_ground_truth(truth: GroundTruth, path: str | Path) -> None:
    data = {"landmarks": [{"id": lid, "x": p.x, "y": p.y} for lid, p in truth.landmarks]}
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def transforms_to_json(result: AlignmentResult, recording_ids: Sequence[str]) -> dict:
    return {
        "gauge": recording_ids[0] if recording_ids else None,
        "objective": result.objective,
        "iterations": result.iterations,
        "restart_index": result.restart_index,
        "converged": result.converged,
        "degenerate": result.degenerate,
        "transforms": {
            rid: {"theta": T.theta, "tx": T.tx, "ty": T.ty}
            for rid, T in ((rid, result.transforms[rid]) for rid in recording_ids)
        },
    }
