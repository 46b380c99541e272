import re
import xml.etree.ElementTree as ET

from crowdmap.aggregate import LandmarkCluster, SemanticLandmarkMap
from crowdmap.evaluate import GroundTruth
from crowdmap.geometry import Point2
from crowdmap.render import render_svg

NS = "{http://www.w3.org/2000/svg}"


def circles(svg, group):
    root = ET.fromstring(svg)
    g = next(e for e in root.iter(f"{NS}g") if e.get("class") == group)
    return [(float(c.get("cx")), float(c.get("cy"))) for c in g.iter(f"{NS}circle")]


def test_empty_map_is_grid_only():
    svg = render_svg(SemanticLandmarkMap(()))
    root = ET.fromstring(svg)
    assert root.get("width") == "400.00"
    assert len(list(root.iter(f"{NS}line"))) == 22
    assert circles(svg, "landmarks") == []


def test_one_landmark():
    m = SemanticLandmarkMap((LandmarkCluster((0,), "Tea & <cups>", Point2(2.0, 3.0)),))
    svg = render_svg(m)
    # bounds [1, 3] x [2, 4] at 40 px per meter, y axis flipped
    assert circles(svg, "landmarks") == [(40.0, 40.0)]
    assert "Tea &amp; &lt;cups&gt;" in svg
    assert 'stroke="#f28c28"' in svg


def test_aligned_overlay_and_deterministic():
    truth = GroundTruth.from_pairs([("A", (0, 0)), ("B", (4, 0)), ("C", (0, 4))])
    # the map is the truth rotated a quarter turn, doubled and shifted
    m = SemanticLandmarkMap((
        LandmarkCluster((0,), "A", Point2(10.0, 10.0)),
        LandmarkCluster((1,), "B", Point2(10.0, 18.0)),
        LandmarkCluster((2,), "C", Point2(2.0, 10.0)),
    ))
    svg = render_svg(m, truth)
    assert svg == render_svg(m, truth)
    assert sorted(circles(svg, "landmarks")) == sorted(circles(svg, "truth"))
    assert re.findall(r"<title>(\w)</title>", svg) == ["A", "B", "C"]


def test_unmatchable_truth_still_renders():
    truth = GroundTruth.from_pairs([("X", (0, 0))])
    m = SemanticLandmarkMap((LandmarkCluster((0,), "A", Point2(1.0, 1.0)),))
    svg = render_svg(m, truth)
    assert len(circles(svg, "truth")) == 1 and len(circles(svg, "landmarks")) == 1
