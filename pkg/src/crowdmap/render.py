"""Deterministic SVG scatter of a landmark map, optionally over ground truth."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from crowdmap.aggregate import SemanticLandmarkMap
from crowdmap.errors import EvaluationError
from crowdmap.evaluate import GroundTruth, apply_similarity, positional_error

PX_PER_M = 40.0
MARGIN_M = 1.0
MAP_COLOR = "#f28c28"
TRUTH_COLOR = "#000000"


def _f(v: float) -> str:
    return f"{v:.2f}"


def render_svg(landmark_map: SemanticLandmarkMap, truth: GroundTruth | None = None) -> str:
    """Map landmarks as labeled orange circles, ground truth as small black dots.

    With ground truth, map positions are first brought onto it by the
    evaluation similarity transform; when too few labels match, they are drawn
    as-is.
    """
    map_xy = np.array([c.position.as_array() for c in landmark_map.clusters]).reshape(-1, 2)
    truth_xy = np.zeros((0, 2))
    if truth is not None:
        truth_xy = np.array([p.as_array() for _, p in truth.landmarks]).reshape(-1, 2)
        try:
            report = positional_error(landmark_map, truth)
            map_xy = apply_similarity(report.scale, report.applied_transform, map_xy)
        except EvaluationError:
            pass

    everything = np.vstack([map_xy, truth_xy])
    if len(everything):
        lo = np.floor(everything.min(axis=0) - MARGIN_M)
        hi = np.ceil(everything.max(axis=0) + MARGIN_M)
    else:
        lo, hi = np.array([0.0, 0.0]), np.array([10.0, 10.0])
    width_m, height_m = hi - lo

    def px(xy):
        return (xy[0] - lo[0]) * PX_PER_M, (hi[1] - xy[1]) * PX_PER_M

    w, h = width_m * PX_PER_M, height_m * PX_PER_M
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
        f'viewBox="0 0 {_f(w)} {_f(h)}">',
        f'<rect x="0" y="0" width="{_f(w)}" height="{_f(h)}" fill="#ffffff"/>',
        '<g class="grid" stroke="#dddddd" stroke-width="1">',
    ]
    for gx in range(int(lo[0]), int(hi[0]) + 1):
        x = (gx - lo[0]) * PX_PER_M
        out.append(f'<line x1="{_f(x)}" y1="0.00" x2="{_f(x)}" y2="{_f(h)}"/>')
    for gy in range(int(lo[1]), int(hi[1]) + 1):
        y = (hi[1] - gy) * PX_PER_M
        out.append(f'<line x1="0.00" y1="{_f(y)}" x2="{_f(w)}" y2="{_f(y)}"/>')
    out.append("</g>")

    if truth is not None and len(truth_xy):
        out.append(f'<g class="truth" fill="{TRUTH_COLOR}">')
        for (lid, _), xy in zip(truth.landmarks, truth_xy):
            x, y = px(xy)
            out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3"><title>{escape(lid)}</title></circle>')
        out.append("</g>")

    out.append('<g class="landmarks" font-family="sans-serif" font-size="11">')
    for c, xy in zip(landmark_map.clusters, map_xy):
        x, y = px(xy)
        out.append(
            f'<circle cx="{_f(x)}" cy="{_f(y)}" r="6" fill="none" stroke="{MAP_COLOR}" '
            f'stroke-width="2"/>'
        )
        out.append(f'<text x="{_f(x + 8)}" y="{_f(y - 8)}" fill="#333333">{escape(c.label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
