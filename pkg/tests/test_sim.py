import math

import numpy as np
import pytest

from locrobust.core import FeatureClass, Pose2D, integrate_odometry, inverse, transform_points
from locrobust.errors import EmptyRouteError
from locrobust.schemas import RouteSpec, WorldSpec, ZoneSpec
from locrobust.sim import (
    QUAD_DESERT,
    QUAD_LENGTH,
    WORLD_PRESETS,
    build_route,
    default_sensors,
    generate_world,
    noise_free_sensors,
    quad_world,
    rounded_rectangle,
    simulate_run,
    world_summary,
)


def test_build_route_resamples_with_segment_headings():
    route = build_route(RouteSpec(waypoints=[(0, 0), (10, 0), (10, 10)]), spacing=1.0)
    assert route.length == pytest.approx(20.0)
    assert route.pose_at_arc(5.0).heading == pytest.approx(0.0)
    assert route.pose_at_arc(15.0).heading == pytest.approx(math.pi / 2)


def test_build_route_rejects_degenerate_polyline():
    with pytest.raises(EmptyRouteError):
        build_route(RouteSpec(waypoints=[(1, 1), (1, 1)]), spacing=1.0)


def test_generate_world_is_deterministic(straight_world):
    a, _ = generate_world(straight_world)
    b, _ = generate_world(straight_world)
    assert a.features == b.features


def test_zero_density_world_has_no_features():
    spec = WorldSpec(route=RouteSpec(waypoints=[(0, 0), (50, 0)]), zones=[ZoneSpec(start=0, end=50)])
    fmap, route = generate_world(spec)
    assert len(fmap) == 0
    assert world_summary(fmap, route)["route_length"] == pytest.approx(50.0)


def test_features_respect_lateral_offset(straight_world):
    fmap, _ = generate_world(straight_world)
    low, high = straight_world.lateral_offset
    for f in fmap:
        assert low - 1e-9 <= abs(f.northing) <= high + 1e-9
        assert -1e-9 <= f.easting <= 100.0 + 1e-9


def test_quad_preset_geometry():
    spec = quad_world()
    assert spec.route.length == pytest.approx(QUAD_LENGTH, abs=1e-6)
    fmap, route = generate_world(spec)
    assert route.length == pytest.approx(QUAD_LENGTH, abs=1e-6)
    assert fmap.count(FeatureClass.POLE) > 100
    # Nothing is placed along the desert stretch of route.
    desert = [route.pose_at_arc(s).position for s in np.arange(QUAD_DESERT[0] + 16, QUAD_DESERT[1] - 16, 1.0)]
    for pos in desert:
        for cls in (FeatureClass.POLE, FeatureClass.CORNER):
            assert len(fmap.within(cls, pos, 1.0)) == 0


@pytest.mark.parametrize("name", sorted(WORLD_PRESETS))
def test_presets_validate(name):
    spec = WORLD_PRESETS[name]()
    fmap, route = generate_world(spec)
    assert route.length > 0
    assert len(fmap) > 0


def test_noise_free_run_matches_route(noise_free_run):
    fmap, dataset = noise_free_run
    truth = dataset.ground_truth
    assert truth.length == pytest.approx(100.0, abs=1e-9)
    assert np.allclose(truth.positions()[:, 1], 0.0)
    assert all(o.distance == pytest.approx(0.5) for o in dataset.odometry)
    assert all(o.dheading == 0.0 for o in dataset.odometry)
    # Noise-free fixes sit on the truth.
    for reading in dataset.gps_readings:
        assert reading.northing == pytest.approx(0.0, abs=1e-12)


def test_simulate_run_is_seed_deterministic(straight_world):
    fmap, route = generate_world(straight_world)
    a = simulate_run(fmap, route, default_sensors(), 5.0, seed=9)
    b = simulate_run(fmap, route, default_sensors(), 5.0, seed=9)
    c = simulate_run(fmap, route, default_sensors(), 5.0, seed=10)
    assert a.odometry == b.odometry
    assert a.feature_frames == b.feature_frames
    assert a.odometry != c.odometry


def test_stream_rates(noise_free_run):
    _, dataset = noise_free_run
    # 100 m at 5 m/s: 200 odometry steps, 1 Hz GPS, 10 Hz frames.
    assert len(dataset.odometry) == 200
    assert len(dataset.gps_readings) == 21
    assert len(dataset.feature_frames) == 201


def test_gps_dropout_removes_fixes(straight_world):
    fmap, route = generate_world(straight_world)
    dataset = simulate_run(fmap, route, noise_free_sensors(), 5.0, seed=1, gps_dropout_zones=[(20.0, 60.0)])
    for reading in dataset.gps_readings:
        assert not 20.0 <= reading.easting <= 60.0


def test_observations_respect_range_and_fov(straight_world):
    fmap, route = generate_world(straight_world)
    sensors = noise_free_sensors()
    dataset = simulate_run(fmap, route, sensors, 5.0, seed=2)
    for frame in dataset.feature_frames:
        for obs in frame.observations:
            rng = math.hypot(obs.x, obs.y)
            assert sensors.lidar.min_range - 1e-9 <= rng <= sensors.lidar.max_range + 1e-9
            assert obs.x >= -1e-9


def _visible(fmap, pose, lidar):
    """Ids and sensor-frame positions of every feature the lidar can see from ``pose``, by id."""
    features = sorted(fmap, key=lambda f: f.id)
    pts = np.array([[f.easting, f.northing] for f in features], dtype=float).reshape(-1, 2)
    local = transform_points(inverse(pose), pts)
    ranges = np.hypot(local[:, 0], local[:, 1])
    keep = (
        (ranges >= lidar.min_range)
        & (ranges <= lidar.max_range)
        & (np.abs(np.arctan2(local[:, 1], local[:, 0])) <= 0.5 * lidar.fov)
    )
    return [(f.id, f.cls, x, y) for f, (x, y), k in zip(features, local, keep) if k]


def test_zero_detection_probability_gives_empty_frames(straight_world):
    fmap, route = generate_world(straight_world)
    base = noise_free_sensors()
    sensors = base.model_copy(update={"lidar": base.lidar.model_copy(update={"detection_probability": 0.0})})
    dataset = simulate_run(fmap, route, sensors, 5.0, seed=6)
    assert dataset.feature_frames
    assert all(len(frame) == 0 for frame in dataset.feature_frames)


def test_detection_rate_matches_probability(straight_world):
    fmap, route = generate_world(straight_world)
    base = noise_free_sensors()
    sensors = base.model_copy(update={"lidar": base.lidar.model_copy(update={"detection_probability": 0.9})})
    dataset = simulate_run(fmap, route, sensors, 0.25, seed=12)
    visible = sum(len(_visible(fmap, f.true_pose, sensors.lidar)) for f in dataset.feature_frames)
    detected = sum(len(f) for f in dataset.feature_frames)
    assert visible >= 10_000
    assert detected / visible == pytest.approx(0.9, abs=0.02)


def test_observation_residuals_within_five_sigma(straight_world):
    fmap, route = generate_world(straight_world)
    base = default_sensors()
    sensors = base.model_copy(update={"lidar": base.lidar.model_copy(update={"clutter_rate": 0.0})})
    dataset = simulate_run(fmap, route, sensors, 5.0, seed=13)
    bound = 5.0 * sensors.lidar.sigma
    checked = 0
    for frame in dataset.feature_frames:
        for cls in (FeatureClass.POLE, FeatureClass.CORNER):
            local = frame.restrict([cls]).points()
            if not len(local):
                continue
            world_pts = transform_points(frame.true_pose, local)
            _, idx = fmap.nearest(cls, world_pts)
            residual = np.abs(world_pts - fmap.points(cls)[idx])
            assert np.all(residual <= bound)
            checked += len(local)
    assert checked > 500


def test_noise_free_odometry_closes_quad_loop():
    fmap, route = generate_world(quad_world())
    dataset = simulate_run(fmap, route, noise_free_sensors(), 5.0, seed=0)
    truth = dataset.ground_truth
    assert truth.length == pytest.approx(QUAD_LENGTH, abs=0.5)
    pose = truth.samples[0].pose
    for increment, sample in zip(dataset.odometry, truth.samples[1:]):
        pose = integrate_odometry(pose, increment.distance, increment.dheading)
        assert pose.distance_to(sample.pose) <= 1e-6
        assert abs(pose.heading_error(sample.pose)) <= 1e-6


def test_noise_free_frames_contain_every_visible_feature(noise_free_run):
    fmap, dataset = noise_free_run
    lidar = noise_free_sensors().lidar
    for frame in dataset.feature_frames:
        expected = _visible(fmap, frame.true_pose, lidar)
        assert len(frame) == len(expected)
        for obs, (_, cls, x, y) in zip(frame.observations, expected):
            assert obs.cls == cls
            assert (obs.x, obs.y) == pytest.approx((x, y), abs=1e-9)


# --- Repeated laps ---


def _small_loop():
    return WorldSpec(
        name="loop",
        route=RouteSpec(waypoints=rounded_rectangle(40.0, 20.0, 5.0), closed=True),
        zones=[ZoneSpec(start=0.0, end=120.0, pole_density=40.0, corner_density=20.0)],
        gps_dropout_zones=[(30.0, 60.0)],
        seed=2,
    )


def test_laps_and_reverse_drive_the_loop_both_ways():
    spec = _small_loop()
    fmap, route = generate_world(spec)
    dataset = simulate_run(fmap, route, noise_free_sensors(), 5.0, seed=1, laps=2, reverse=True)
    per_leg = int(math.floor(2 * route.length / 0.5 + 1e-9))
    # Two laps out, one turn on the spot, two laps back.
    assert len(dataset.odometry) == 2 * per_leg + 1
    assert sum(o.distance for o in dataset.odometry) == pytest.approx(2 * per_leg * 0.5)
    turn = dataset.odometry[per_leg]
    assert turn.distance == 0.0
    assert abs(turn.dheading) == pytest.approx(math.pi)
    # The first and last metres pass the same stretch of road with opposite headings.
    forward = dataset.ground_truth.samples[10].pose
    backward = dataset.ground_truth.samples[-11].pose
    assert forward.distance_to(backward) < 2.0
    assert abs(forward.heading_error(Pose2D(0.0, 0.0, backward.heading + math.pi))) < 1e-9


def test_gps_dropout_recurs_on_every_lap():
    spec = _small_loop()
    fmap, route = generate_world(spec)
    once = simulate_run(fmap, route, noise_free_sensors(), 5.0, seed=1, gps_dropout_zones=spec.gps_dropout_zones)
    both = simulate_run(
        fmap, route, noise_free_sensors(), 5.0, seed=1, gps_dropout_zones=spec.gps_dropout_zones, laps=2, reverse=True
    )
    inside = [route.pose_at_arc(s).position for s in np.arange(35.0, 55.5, 0.5)]
    for reading in both.gps_readings:
        assert min(np.hypot(*(p - (reading.easting, reading.northing))) for p in inside) > 2.0
    assert len(both.gps_readings) > 3 * len(once.gps_readings)


def test_repeated_laps_need_a_closed_route(straight_world):
    fmap, route = generate_world(straight_world)
    with pytest.raises(ValueError):
        simulate_run(fmap, route, noise_free_sensors(), 5.0, seed=1, laps=2)
    # A single out-and-back on an open route is fine.
    dataset = simulate_run(fmap, route, noise_free_sensors(), 5.0, seed=1, reverse=True)
    assert dataset.ground_truth.samples[-1].pose.distance_to(dataset.ground_truth.samples[0].pose) < 1e-6
