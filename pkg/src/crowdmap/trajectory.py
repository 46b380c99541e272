"""Landmark positions from a walking trajectory.

When a user types a note they are usually standing at the landmark, so the
annotation's position is the mean of the slow trajectory samples around the
annotation time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from crowdmap.errors import InputError, OutOfRangeError
from crowdmap.geometry import Point2, TrajectorySample, validate_trajectory


@dataclass(frozen=True)
class StationaryParams:
    speed_threshold: float = 0.2  # m/s
    window: float = 3.0  # s, centered on the annotation time

    def __post_init__(self) -> None:
        if not (self.speed_threshold > 0 and self.window > 0):
            raise InputError("speed_threshold and window must be strictly positive")


def sample_speeds(t: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Forward-difference speed per sample; the last sample uses the backward difference.

    A single sample has no defined speed and gets ``inf``.
    """
    n = len(t)
    if n < 2:
        return np.full(n, np.inf)
    step = np.linalg.norm(np.diff(xy, axis=0), axis=1) / np.diff(t)
    return np.append(step, step[-1])


def stationary_position(
    trajectory: Sequence[TrajectorySample],
    annotation_time: float,
    params: StationaryParams = StationaryParams(),
) -> Point2:
    if len(trajectory) == 0:
        raise InputError("trajectory is empty")
    validate_trajectory(trajectory)
    t = np.array([s.t for s in trajectory], dtype=float)
    xy = np.array([[s.x, s.y] for s in trajectory], dtype=float)

    if not (t[0] - params.window <= annotation_time <= t[-1] + params.window):
        raise OutOfRangeError(
            f"annotation time {annotation_time} outside trajectory span "
            f"[{t[0]}, {t[-1]}] +/- {params.window}"
        )

    half = params.window / 2.0
    in_window = (t >= annotation_time - half) & (t <= annotation_time + half)
    slow = in_window & (sample_speeds(t, xy) < params.speed_threshold)
    if slow.any():
        return Point2.from_array(xy[slow].mean(axis=0))
    nearest = int(np.argmin(np.abs(t - annotation_time)))
    return Point2.from_array(xy[nearest])
