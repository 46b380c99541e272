import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdmap.errors import InputError
from crowdmap.geometry import (
    Observation,
    Point2,
    Recording,
    RigidTransform2,
    TrajectorySample,
    apply,
    format_timestamp,
    inverse,
    parse_timestamp,
    wrap_angle,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(-50.0, 50.0, allow_nan=False)


def _matmul_oracle(theta, t, p):
    # explicit 2x2 product, written out independently of the library
    r = [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    return (r[0][0] * p[0] + r[0][1] * p[1] + t[0], r[1][0] * p[0] + r[1][1] * p[1] + t[1])


@pytest.mark.parametrize(
    "theta, t, p, expected",
    [
        (0.0, (0, 0), (3, 4), (3, 4)),
        (math.pi / 2, (0, 0), (1, 0), (0, 1)),
        (math.pi / 2, (2, -1), (1, 0), (2, 0)),
    ],
)
def test_apply_examples(theta, t, p, expected):
    q = apply(RigidTransform2(theta, *t), Point2(*p))
    assert (q.x, q.y) == pytest.approx(expected, abs=1e-12)
    assert (q.x, q.y) == pytest.approx(_matmul_oracle(theta, t, p), abs=1e-12)


def test_inverse_examples():
    assert inverse(RigidTransform2()) == RigidTransform2(0.0, 0.0, 0.0)
    inv = inverse(RigidTransform2(math.pi / 2))
    assert inv.theta == pytest.approx(-math.pi / 2)
    assert (inv.tx, inv.ty) == pytest.approx((0, 0), abs=1e-15)


def test_inverse_with_translation_matches_round_trip_solution():
    # Solving p = R^T (q - t) for theta = pi/2, t = (2, -1) gives translation
    # -R^T t = (1, 2); the round trip below is the oracle.
    T = RigidTransform2(math.pi / 2, 2.0, -1.0)
    inv = inverse(T)
    assert inv.theta == pytest.approx(-math.pi / 2)
    assert (inv.tx, inv.ty) == pytest.approx((1.0, 2.0), abs=1e-12)
    for p in [Point2(0, 0), Point2(1, 0), Point2(-3.5, 7.25)]:
        back = apply(inv, apply(T, p))
        assert (back.x, back.y) == pytest.approx((p.x, p.y), abs=1e-12)


def test_round_trip_1000_random():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        T = RigidTransform2(rng.uniform(-10, 10), *rng.uniform(-100, 100, 2))
        p = Point2(*rng.uniform(-100, 100, 2))
        q = apply(inverse(T), apply(T, p))
        assert math.hypot(q.x - p.x, q.y - p.y) < 1e-12


@given(angles, finite, finite, finite, finite, finite, finite)
def test_rigidity(theta, tx, ty, ax, ay, bx, by):
    T = RigidTransform2(theta, tx, ty)
    a, b = Point2(ax, ay), Point2(bx, by)
    qa, qb = apply(T, a), apply(T, b)
    before = math.hypot(ax - bx, ay - by)
    after = math.hypot(qa.x - qb.x, qa.y - qb.y)
    assert abs(before - after) < 1e-12 * max(1.0, before)


@given(angles)
def test_wrap_idempotent_and_in_range(theta):
    w = wrap_angle(theta)
    assert -math.pi <= w < math.pi
    assert wrap_angle(w) == w
    assert math.cos(w) == pytest.approx(math.cos(theta), abs=1e-9)


def test_theta_normalized_on_construction():
    assert RigidTransform2(math.pi).theta == -math.pi
    assert RigidTransform2(3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)


@given(angles, finite, finite)
def test_apply_array_agrees_with_apply(theta, x, y):
    T = RigidTransform2(theta, 1.5, -2.0)
    q = apply(T, Point2(x, y))
    assert T.apply_array(np.array([x, y])) == pytest.approx([q.x, q.y], abs=1e-9)


def test_compose_applies_right_first():
    rng = np.random.default_rng(3)
    for _ in range(50):
        A = RigidTransform2(rng.uniform(-4, 4), *rng.uniform(-5, 5, 2))
        B = RigidTransform2(rng.uniform(-4, 4), *rng.uniform(-5, 5, 2))
        p = Point2(*rng.uniform(-5, 5, 2))
        lhs = apply(A.compose(B), p)
        rhs = apply(A, apply(B, p))
        assert (lhs.x, lhs.y) == pytest.approx((rhs.x, rhs.y), abs=1e-12)


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
def test_non_finite_rejected(bad):
    with pytest.raises(InputError):
        Point2(bad, 0.0)
    with pytest.raises(InputError):
        RigidTransform2(bad)
    with pytest.raises(InputError):
        RigidTransform2(0.0, bad, 0.0)


def test_recording_invariants():
    a = Observation("A", 0, "x", Point2(0, 0), timestamp=1.0)
    b = Observation("A", 1, "y", Point2(1, 0), timestamp=2.0)
    Recording("A", (a, b))
    with pytest.raises(InputError):
        Recording("A", (b, a))  # decreasing timestamps
    with pytest.raises(InputError):
        Recording("B", (a,))
    with pytest.raises(InputError):
        Recording("", ())
    with pytest.raises(InputError):
        Recording("A", (), (TrajectorySample(1, 0, 0), TrajectorySample(1, 1, 1)))
    with pytest.raises(InputError):
        Recording("A", (), (TrajectorySample(-1, 0, 0),))


def test_observation_requires_recording_id():
    with pytest.raises(InputError):
        Observation("", 0, "x", Point2(0, 0))


def test_timestamps_round_trip():
    for text in ["2025-01-17T11:36:37Z", "2025-01-17T11:36:37.250000Z"]:
        assert format_timestamp(parse_timestamp(text)) == text
    assert parse_timestamp("2025-01-17T11:36:37") == parse_timestamp("2025-01-17T11:36:37+00:00")
    with pytest.raises(InputError):
        parse_timestamp("yesterday")
