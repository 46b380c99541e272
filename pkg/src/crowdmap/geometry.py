"""Planar geometry and the domain records every other module works with."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from crowdmap.errors import InputError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Map an angle in radians onto [-pi, pi)."""
    if not math.isfinite(theta):
        raise InputError(f"angle must be finite, got {theta!r}")
    wrapped = (theta + math.pi) % TWO_PI - math.pi
    # float modulo can land exactly on +pi for inputs just below -pi
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    return wrapped


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InputError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, xy) -> Point2:
        return cls(float(xy[0]), float(xy[1]))


@dataclass(frozen=True)
class RigidTransform2:
    """Rotation by ``theta`` about the origin followed by translation ``(tx, ty)``.

    ``theta`` is normalized onto [-pi, pi) at construction.
    """

    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        if not (math.isfinite(self.tx) and math.isfinite(self.ty)):
            raise InputError("translation must be finite")

    @classmethod
    def identity(cls) -> RigidTransform2:
        return cls(0.0, 0.0, 0.0)

    @property
    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.theta)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def apply_array(self, xy: np.ndarray) -> np.ndarray:
        """Transform an ``(n, 2)`` (or ``(2,)``) array of points."""
        xy = np.asarray(xy, dtype=float)
        return xy @ self.matrix.T + self.translation

    def compose(self, other: RigidTransform2) -> RigidTransform2:
        """Return ``self ∘ other`` (apply ``other`` first)."""
        t = self.matrix @ other.translation + self.translation
        return RigidTransform2(self.theta + other.theta, float(t[0]), float(t[1]))


def apply(transform: RigidTransform2, p: Point2) -> Point2:
    c, s = math.cos(transform.theta), math.sin(transform.theta)
    return Point2(c * p.x - s * p.y + transform.tx, s * p.x + c * p.y + transform.ty)


def inverse(transform: RigidTransform2) -> RigidTransform2:
    # x = R^T (y - t)  ->  rotation -theta, translation -R^T t
    c, s = math.cos(transform.theta), math.sin(transform.theta)
    tx, ty = transform.tx, transform.ty
    return RigidTransform2(-transform.theta, -(c * tx + s * ty), -(-s * tx + c * ty))


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class Observation:
    """One landmark sighting, with its position in the recording's own frame.

    ``timestamp`` is seconds since the Unix epoch (UTC).
    """

    recording_id: str
    obs_index: int
    label: str
    position: Point2
    note: str = ""
    timestamp: float = 0.0
    labeled: bool = True

    def __post_init__(self) -> None:
        if not self.recording_id:
            raise InputError("observation recording_id must be non-empty")


@dataclass(frozen=True)
class Recording:
    recording_id: str
    observations: tuple[Observation, ...] = ()
    trajectory: tuple[TrajectorySample, ...] | None = None

    def __post_init__(self) -> None:
        if not self.recording_id:
            raise InputError("recording_id must be non-empty")
        object.__setattr__(self, "observations", tuple(self.observations))
        for obs in self.observations:
            if obs.recording_id != self.recording_id:
                raise InputError(
                    f"observation {obs.obs_index} belongs to {obs.recording_id!r}, "
                    f"not {self.recording_id!r}"
                )
        stamps = [o.timestamp for o in self.observations]
        if any(b < a for a, b in zip(stamps, stamps[1:])):
            raise InputError(f"timestamps decrease within recording {self.recording_id!r}")
        if self.trajectory is not None:
            traj = tuple(self.trajectory)
            object.__setattr__(self, "trajectory", traj)
            validate_trajectory(traj)


def validate_trajectory(samples) -> None:
    prev = None
    for s in samples:
        if s.t < 0:
            raise InputError(f"trajectory time must be non-negative, got {s.t}")
        if prev is not None and s.t <= prev:
            raise InputError("trajectory times must be strictly increasing")
        prev = s.t


def parse_timestamp(text: str) -> float:
    """ISO-8601 string to epoch seconds; naive times are taken as UTC."""
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise InputError(f"bad ISO-8601 timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(seconds: float) -> str:
    dt = datetime.fromtimestamp(seconds, tz=timezone.utc)
    if dt.microsecond:
        return dt.isoformat(timespec="microseconds").replace("+00:00", "Z")
    return dt.isoformat(timespec="seconds").replace("+00:00", "Z")


@dataclass(frozen=True)
class Positions:
    """Observation positions and recording membership packed as arrays."""

    xy: np.ndarray
    rec: np.ndarray
    recording_ids: tuple[str, ...] = field(default=())

    @classmethod
    def from_observations(cls, observations, recording_ids=None) -> Positions:
        if recording_ids is None:
            recording_ids = ordered_recording_ids(observations)
        index = {rid: k for k, rid in enumerate(recording_ids)}
        xy = np.array([[o.position.x, o.position.y] for o in observations], dtype=float)
        xy = xy.reshape(-1, 2)
        rec = np.array([index[o.recording_id] for o in observations], dtype=np.intp)
        return cls(xy, rec, tuple(recording_ids))


def ordered_recording_ids(observations) -> tuple[str, ...]:
    """Distinct recording ids in first-appearance order."""
    seen: dict[str, None] = {}
    for o in observations:
        seen.setdefault(o.recording_id, None)
    return tuple(seen)
