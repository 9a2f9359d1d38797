import math

import numpy as np
import pytest

from locrobust.core import (
    FeatureClass,
    FeatureFrame,
    FeatureMap,
    MapFeature,
    Observation,
    Pose2D,
    Trajectory,
    compose,
    cumulative_arc_length,
    integrate_odometry,
    inverse,
    motion_model,
    relative,
    transform_frame_to_global,
    transform_points,
    wrap_angle,
    wrap_angles,
)
from locrobust.errors import EmptyRouteError, InvalidAngleError


@pytest.mark.parametrize(
    "theta, expected",
    [
        (0.0, 0.0),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (3 * math.pi, math.pi),
        (2 * math.pi + 0.5, 0.5),
        (-2 * math.pi - 0.5, -0.5),
    ],
)
def test_wrap_angle(theta, expected):
    assert wrap_angle(theta) == pytest.approx(expected, abs=1e-12)


def test_wrap_angle_rejects_non_finite():
    with pytest.raises(InvalidAngleError):
        wrap_angle(float("nan"))
    with pytest.raises(InvalidAngleError):
        wrap_angles(np.array([0.0, np.inf]))


def test_wrap_angles_matches_scalar():
    values = np.linspace(-20.0, 20.0, 401)
    vectorised = wrap_angles(values)
    assert np.all(vectorised > -math.pi)
    assert np.all(vectorised <= math.pi)
    np.testing.assert_allclose(vectorised, [wrap_angle(v) for v in values], atol=1e-12)


def test_pose_wraps_heading():
    assert Pose2D(1.0, 2.0, 3 * math.pi).heading == pytest.approx(math.pi)


def test_compose_with_inverse_is_identity():
    p = Pose2D(3.0, -4.0, 0.7)
    ident = compose(p, inverse(p))
    assert ident.easting == pytest.approx(0.0, abs=1e-12)
    assert ident.northing == pytest.approx(0.0, abs=1e-12)
    assert ident.heading == pytest.approx(0.0, abs=1e-12)


def test_compose_is_associative():
    rng = np.random.default_rng(8)
    for _ in range(200):
        a, b, c = (Pose2D(*rng.uniform(-50.0, 50.0, 2), rng.uniform(-math.pi, math.pi)) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert left.easting == pytest.approx(right.easting, abs=1e-9)
        assert left.northing == pytest.approx(right.northing, abs=1e-9)
        assert abs(math.remainder(left.heading - right.heading, 2 * math.pi)) <= 1e-9


def test_relative_recovers_offset():
    a = Pose2D(1.0, 1.0, math.pi / 2)
    b = compose(a, Pose2D(2.0, 0.0, 0.1))
    rel = relative(a, b)
    assert (rel.easting, rel.northing, rel.heading) == pytest.approx((2.0, 0.0, 0.1))


def test_transform_points_rotates_then_translates():
    pts = transform_points(Pose2D(1.0, 0.0, math.pi / 2), np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(pts, [[1.0, 1.0]], atol=1e-12)


def test_integrate_odometry_straight_and_turn():
    p = integrate_odometry(Pose2D(), 10.0, 0.0)
    assert (p.easting, p.northing, p.heading) == pytest.approx((10.0, 0.0, 0.0))
    q = integrate_odometry(Pose2D(), 1.0, 0.2)
    assert q.easting == pytest.approx(math.cos(0.1))
    assert q.northing == pytest.approx(math.sin(0.1))
    assert q.heading == pytest.approx(0.2)


def test_motion_model_matches_scalar_model():
    states = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.1], [-1.0, 0.5, -3.1]])
    moved = motion_model(states, 2.0, 0.3)
    for row, out in zip(states, moved):
        expected = integrate_odometry(Pose2D.from_array(row), 2.0, 0.3)
        np.testing.assert_allclose(out, expected.as_array(), atol=1e-12)


def test_feature_map_nearest_is_class_constrained():
    fmap = FeatureMap(
        [
            MapFeature(0, FeatureClass.POLE, 0.0, 0.0),
            MapFeature(1, FeatureClass.CORNER, 0.1, 0.0),
            MapFeature(2, FeatureClass.POLE, 5.0, 0.0),
        ]
    )
    dist, idx = fmap.nearest(FeatureClass.POLE, np.array([[4.0, 0.0]]))
    assert dist[0] == pytest.approx(1.0)
    assert fmap.ids(FeatureClass.POLE)[idx[0]] == 2
    assert fmap.count(FeatureClass.CORNER) == 1


def test_feature_map_empty_class_returns_inf():
    fmap = FeatureMap([MapFeature(0, FeatureClass.POLE, 0.0, 0.0)])
    dist, idx = fmap.nearest(FeatureClass.CORNER, np.array([[0.0, 0.0]]))
    assert np.isinf(dist[0])
    assert idx[0] == -1


def test_feature_map_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        FeatureMap([MapFeature(0, FeatureClass.POLE, 0.0, 0.0), MapFeature(0, FeatureClass.POLE, 1.0, 0.0)])


def test_feature_map_restrict_and_within():
    fmap = FeatureMap(
        [
            MapFeature(0, FeatureClass.POLE, 0.0, 0.0),
            MapFeature(1, FeatureClass.CORNER, 1.0, 0.0),
            MapFeature(2, FeatureClass.POLE, 10.0, 0.0),
        ]
    )
    assert len(fmap.restrict([FeatureClass.POLE])) == 2
    assert list(fmap.within(FeatureClass.POLE, np.array([0.0, 0.0]), 5.0)) == [0]


def test_frame_to_global_and_restrict():
    frame = FeatureFrame(
        0.0, (Observation(FeatureClass.POLE, 1.0, 0.0), Observation(FeatureClass.CORNER, 0.0, 1.0))
    )
    out = transform_frame_to_global(Pose2D(2.0, 0.0, 0.0), frame)
    assert out[0] == (FeatureClass.POLE, pytest.approx((3.0, 0.0)))
    assert len(frame.restrict([FeatureClass.CORNER])) == 1


def test_cumulative_arc_length():
    np.testing.assert_allclose(cumulative_arc_length(np.array([[0, 0], [3, 4], [3, 5]])), [0.0, 5.0, 6.0])


def test_trajectory_validation_and_interpolation():
    traj = Trajectory.from_poses([0.0, 1.0, 2.0], [Pose2D(0, 0, 0), Pose2D(1, 0, 0), Pose2D(1, 1, math.pi / 2)])
    assert traj.length == pytest.approx(2.0)
    mid = traj.pose_at_arc(1.5)
    assert (mid.easting, mid.northing, mid.heading) == pytest.approx((1.0, 0.5, 0.0))
    with pytest.raises(ValueError):
        Trajectory.from_poses([0.0, 0.0], [Pose2D(), Pose2D(1, 0, 0)])
    with pytest.raises(EmptyRouteError):
        Trajectory.from_poses([0.0], [Pose2D()]).pose_at_arc(0.0)
