import math

import numpy as np
import pytest

from conftest import frame_from_map
from locrobust.core import FeatureClass, FeatureFrame, FeatureMap, MapFeature, Observation, Pose2D, transform_points
from locrobust.errors import DegenerateAlignmentError
from locrobust.matcher import icp_match, rigid_align
from locrobust.schemas import IcpConfig


def test_rigid_align_pure_translation():
    pairs = [((0.0, 0.0), (2.0, 3.0)), ((1.0, 0.0), (3.0, 3.0)), ((0.0, 1.0), (2.0, 4.0))]
    t = rigid_align(pairs)
    assert (t.easting, t.northing, t.heading) == pytest.approx((2.0, 3.0, 0.0), abs=1e-12)


def test_rigid_align_recovers_rotation():
    truth = Pose2D(1.0, -2.0, 0.3)
    src = np.array([[0.0, 0.0], [4.0, 1.0], [-2.0, 3.0], [1.0, -5.0]])
    dst = transform_points(truth, src)
    t = rigid_align(np.stack([src, dst], axis=1))
    assert (t.easting, t.northing, t.heading) == pytest.approx((1.0, -2.0, 0.3), abs=1e-12)


@pytest.mark.parametrize("pairs", [[((0.0, 0.0), (1.0, 1.0))], [((1.0, 1.0), (0.0, 0.0)), ((1.0, 1.0), (2.0, 0.0))]])
def test_rigid_align_degenerate(pairs):
    with pytest.raises(DegenerateAlignmentError):
        rigid_align(pairs)


def test_icp_exact_prior_is_fixed_point(dense_features, dense_map):
    truth = Pose2D(0.5, -0.3, 0.2)
    frame = frame_from_map(dense_features, truth)
    result = icp_match(truth, frame, dense_map, IcpConfig())
    assert result.converged
    assert result.pose.distance_to(truth) < 1e-9
    assert result.rms < 1e-9
    assert result.inlier_count == len(dense_features)


def test_icp_recovers_from_perturbed_prior(dense_features, dense_map):
    truth = Pose2D(0.0, 0.0, 0.0)
    frame = frame_from_map(dense_features, truth)
    prior = Pose2D(0.6, -0.4, 0.03)
    result = icp_match(prior, frame, dense_map, IcpConfig())
    assert result.converged
    assert result.pose.distance_to(truth) < 1e-6
    assert result.pose.heading_error(truth) < 1e-8


def test_icp_empty_frame_fails():
    fmap = FeatureMap([MapFeature(0, FeatureClass.POLE, 1.0, 1.0)])
    prior = Pose2D(1.0, 2.0, 0.0)
    result = icp_match(prior, FeatureFrame(0.0), fmap, IcpConfig())
    assert not result.converged
    assert result.pose == prior
    assert result.inlier_count == 0
    assert math.isinf(result.rms)


def test_icp_single_feature_is_not_valid():
    fmap = FeatureMap([MapFeature(0, FeatureClass.POLE, 5.0, 0.0)])
    frame = FeatureFrame(0.0, (Observation(FeatureClass.POLE, 5.0, 0.0),))
    result = icp_match(Pose2D(), frame, fmap, IcpConfig())
    assert not result.converged


def test_icp_class_constraint_blocks_cross_class_matches():
    fmap = FeatureMap(
        [
            MapFeature(0, FeatureClass.CORNER, 5.0, 0.0),
            MapFeature(1, FeatureClass.CORNER, 0.0, 5.0),
            MapFeature(2, FeatureClass.CORNER, -5.0, 0.0),
        ]
    )
    frame = FeatureFrame(
        0.0,
        tuple(Observation(FeatureClass.POLE, x, y) for x, y in [(5.0, 0.0), (0.0, 5.0), (-5.0, 0.0)]),
    )
    result = icp_match(Pose2D(), frame, fmap, IcpConfig())
    assert not result.converged
    assert result.inlier_count == 0


def test_icp_trace_pairs_only_same_class_features():
    poles = [(5.0, 0.0), (0.0, 5.0), (-5.0, 0.0), (0.0, -6.0), (7.0, 7.0)]
    # Each corner sits closer to the shifted pole observation than its pole does.
    corners = [(x - 0.25, y - 0.2) for x, y in poles]
    fmap = FeatureMap(
        [MapFeature(i, FeatureClass.POLE, x, y) for i, (x, y) in enumerate(poles)]
        + [MapFeature(10 + i, FeatureClass.CORNER, x, y) for i, (x, y) in enumerate(corners)]
    )
    classes = {f.id: f.cls for f in fmap}
    shift = np.array([0.3, 0.25])
    frame = FeatureFrame(
        0.0,
        tuple(Observation(FeatureClass.POLE, x, y) for x, y in np.array(poles) - shift)
        + tuple(Observation(FeatureClass.CORNER, x, y) for x, y in np.array(corners) - shift),
    )
    trace = []
    result = icp_match(Pose2D(), frame, fmap, IcpConfig(), trace=trace)
    assert trace
    pairs = [c for step in trace for c in step.correspondences]
    assert pairs
    assert all(classes[c.map_feature_id] == c.observation_class for c in pairs)
    assert not [c for c in pairs if c.observation_class == FeatureClass.POLE and classes[c.map_feature_id] == FeatureClass.CORNER]
    assert result.converged
    assert (result.pose.easting, result.pose.northing) == pytest.approx((0.3, 0.25), abs=1e-6)


def test_icp_trace_sse_never_increases(dense_features, dense_map):
    frame = frame_from_map(dense_features, Pose2D())
    trace = []
    icp_match(Pose2D(0.8, 0.5, -0.04), frame, dense_map, IcpConfig(), trace=trace)
    assert trace
    for step in trace:
        assert step.sse_after <= step.sse_before + 1e-9
    assert all(c.observation_class in (FeatureClass.POLE, FeatureClass.CORNER) for c in trace[0].correspondences)


def test_icp_is_deterministic(dense_features, dense_map):
    frame = frame_from_map(dense_features, Pose2D(0.2, 0.1, 0.05))
    a = icp_match(Pose2D(1.0, 0.0, 0.0), frame, dense_map, IcpConfig())
    b = icp_match(Pose2D(1.0, 0.0, 0.0), frame, dense_map, IcpConfig())
    assert a == b
