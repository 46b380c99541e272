"""Score a landmark map against ground truth.

The map lives in an arbitrary shared frame, so it is first brought onto the
ground truth with the least-squares similarity transform (rotation,
translation, uniform scale). Correspondences come from labels, never from
proximity, so label mistakes show up as error instead of being hidden.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from crowdmap.aggregate import SemanticLandmarkMap
from crowdmap.errors import EvaluationError, InputError
from crowdmap.geometry import Point2, RigidTransform2


@dataclass(frozen=True)
class GroundTruth:
    landmarks: tuple[tuple[str, Point2], ...]

    @property
    def ids(self) -> list[str]:
        return [lid for lid, _ in self.landmarks]

    @classmethod
    def from_pairs(cls, pairs) -> GroundTruth:
        return cls(tuple((str(lid), p if isinstance(p, Point2) else Point2(*p)) for lid, p in pairs))


@dataclass(frozen=True)
class EvalReport:
    positional_error: float
    coverage: int
    matched_pairs: int
    scale: float
    applied_transform: RigidTransform2
    cluster_count: int = 0
    truth_count: int = 0
    pair_errors: tuple[float, ...] = ()

    def as_dict(self) -> dict:
        return {
            "positional_error_m": self.positional_error,
            "coverage": self.coverage,
            "truth_count": self.truth_count,
            "matched_pairs": self.matched_pairs,
            "cluster_count": self.cluster_count,
            "scale": self.scale,
            "transform": {
                "theta": self.applied_transform.theta,
                "tx": self.applied_transform.tx,
                "ty": self.applied_transform.ty,
            },
        }


def umeyama_similarity(src, dst) -> tuple[float, RigidTransform2]:
    """Similarity ``(s, R, t)`` minimizing ``sum |s R src_k + t - dst_k|^2``.

    Closed form via the SVD of the cross-covariance. The rotation is always
    proper: when the best orthogonal fit is a reflection, the sign of the
    smallest singular direction is flipped.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if src.shape != dst.shape:
        raise InputError(f"src and dst differ in size: {len(src)} vs {len(dst)}")
    n = len(src)
    if n < 2:
        raise InputError("similarity fit needs at least 2 point pairs")

    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    src_c = src - src_mean
    dst_c = dst - dst_mean
    src_var = float(np.mean(np.sum(src_c**2, axis=1)))
    if src_var <= 1e-24 * max(1.0, float(np.max(np.abs(src)))) ** 2:
        raise InputError("source points are all coincident")

    cov = dst_c.T @ src_c / n
    U, D, Vt = np.linalg.svd(cov)
    signs = np.ones(2)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        signs[-1] = -1.0
    R = U @ np.diag(signs) @ Vt
    scale = float(np.dot(D, signs) / src_var)
    t = dst_mean - scale * R @ src_mean
    theta = math.atan2(R[1, 0], R[0, 0])
    return scale, RigidTransform2(theta, float(t[0]), float(t[1]))


def apply_similarity(scale: float, transform: RigidTransform2, xy) -> np.ndarray:
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    return scale * xy @ transform.matrix.T + transform.translation


def positional_error(landmark_map: SemanticLandmarkMap, truth: GroundTruth) -> EvalReport:
    ids = truth.ids
    id_counts = Counter(ids)
    truth_xy: dict[str, list[np.ndarray]] = {}
    for lid, p in truth.landmarks:
        truth_xy.setdefault(lid, []).append(p.as_array())

    clusters = landmark_map.clusters
    anchors = [k for k, c in enumerate(clusters) if id_counts.get(c.label) == 1]
    if len(anchors) < 2:
        raise EvaluationError(
            f"only {len(anchors)} cluster(s) match a unique ground-truth id; need at least 2"
        )
    map_xy = np.array([c.position.as_array() for c in clusters]).reshape(-1, 2)
    src = map_xy[anchors]
    dst = np.array([truth_xy[clusters[k].label][0] for k in anchors])
    try:
        scale, transform = umeyama_similarity(src, dst)
    except InputError as exc:
        raise EvaluationError(f"cannot align map to ground truth: {exc}") from exc

    aligned = apply_similarity(scale, transform, map_xy)
    errors = [float(np.linalg.norm(aligned[k] - dst[m])) for m, k in enumerate(anchors)]
    for k, c in enumerate(clusters):
        if id_counts.get(c.label, 0) > 1:
            candidates = np.array(truth_xy[c.label])
            errors.append(float(np.min(np.linalg.norm(candidates - aligned[k], axis=1))))

    covered = {c.label for c in clusters} & set(id_counts)
    return EvalReport(
        positional_error=float(np.mean(errors)),
        coverage=len(covered),
        matched_pairs=len(errors),
        scale=scale,
        applied_transform=transform,
        cluster_count=len(clusters),
        truth_count=len(truth.landmarks),
        pair_errors=tuple(errors),
    )


def coverage(landmark_map: SemanticLandmarkMap, truth_ids: Sequence[str]) -> int:
    return len({c.label for c in landmark_map.clusters} & set(truth_ids))
