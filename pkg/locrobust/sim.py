"""
Deterministic generation of synthetic worlds, vehicle runs and sensor streams.

A world is a route polyline with zones of pole/corner landmark density; a run
drives the route at constant speed and emits odometry increments, GPS fixes and
lidar feature frames. Identical arguments always produce identical output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    FeatureClass,
    FeatureFrame,
    FeatureMap,
    MapFeature,
    Observation,
    Pose2D,
    Trajectory,
    integrate_odometry,
    wrap_angle,
)
from .errors import EmptyRouteError
from .schemas import (
    GpsSpec,
    LidarSpec,
    OdometrySpec,
    RouteSpec,
    SensorSpec,
    WorldSpec,
    ZoneSpec,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class OdometryIncrement:
    t: float
    distance: float
    dheading: float


@dataclass(frozen=True, slots=True)
class GpsReading:
    t: float
    easting: float
    northing: float
    sigma: float


@dataclass(frozen=True)
class Dataset:
    ground_truth: Trajectory
    odometry: tuple[OdometryIncrement, ...]
    gps_readings: tuple[GpsReading, ...]
    feature_frames: tuple[FeatureFrame, ...]
    seed: int = 0
    speed: float = 0.0

    @property
    def has_truth(self) -> bool:
        return len(self.ground_truth) > 0


def _route_arcs(polyline: np.ndarray, spacing: float) -> np.ndarray:
    steps = np.hypot(*np.diff(polyline, axis=0).T)
    vertex_arcs = np.concatenate(([0.0], np.cumsum(steps)))
    total = vertex_arcs[-1]
    regular = np.arange(0.0, total, spacing)
    return np.unique(np.concatenate((vertex_arcs, regular)))


def build_route(route: RouteSpec, spacing: float) -> Trajectory:
    """Resample a route polyline into a trajectory with segment headings.

    Timestamps equal arc length (a nominal 1 m/s traversal).
    """
    polyline = route.polyline()
    steps = np.hypot(*np.diff(polyline, axis=0).T)
    keep = np.concatenate(([True], steps > 0.0))
    polyline = polyline[keep]
    if len(polyline) < 2:
        raise EmptyRouteError("Route needs at least two distinct waypoints")

    vertex_arcs = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(polyline, axis=0).T))))
    headings = np.arctan2(*np.diff(polyline, axis=0)[:, ::-1].T)
    arcs = _route_arcs(polyline, spacing)

    samples = []
    positions = []
    for s in arcs:
        seg = int(np.searchsorted(vertex_arcs, s, side="right")) - 1
        seg = min(max(seg, 0), len(headings) - 1)
        frac = (s - vertex_arcs[seg]) / (vertex_arcs[seg + 1] - vertex_arcs[seg])
        pos = polyline[seg] + frac * (polyline[seg + 1] - polyline[seg])
        positions.append(pos)
        samples.append((float(s), float(headings[seg])))

    traj = Trajectory.from_poses(
        [s for s, _ in samples],
        [Pose2D(p[0], p[1], h) for p, (_, h) in zip(positions, samples)],
    )
    return traj


def _place_zone(
    rng: np.random.Generator,
    zone: ZoneSpec,
    route: Trajectory,
    lateral: tuple[float, float],
    cls: FeatureClass,
    density: float,
    next_id: int,
) -> list[MapFeature]:
    count = int(rng.poisson(density * (zone.end - zone.start) / 100.0))
    if count == 0:
        return []
    arcs = rng.uniform(zone.start, zone.end, count)
    sides = rng.choice(np.array([-1.0, 1.0]), count)
    offsets = rng.uniform(lateral[0], lateral[1], count)
    features = []
    for i, (s, side, offset) in enumerate(zip(arcs, sides, offsets)):
        pose = route.pose_at_arc(float(s))
        normal = np.array([-math.sin(pose.heading), math.cos(pose.heading)])
        e, n = pose.position + side * offset * normal
        features.append(MapFeature(next_id + i, cls, float(e), float(n)))
    return features


def generate_world(spec: WorldSpec) -> tuple[FeatureMap, Trajectory]:
    """Place landmarks along the route with a seeded Poisson process per zone."""
    route = build_route(spec.route, spec.route_spacing)
    rng = np.random.default_rng(spec.seed)
    features: list[MapFeature] = []
    for zone in spec.zones:
        for cls, density in (
            (FeatureClass.POLE, zone.pole_density),
            (FeatureClass.CORNER, zone.corner_density),
        ):
            features.extend(_place_zone(rng, zone, route, spec.lateral_offset, cls, density, len(features)))
    fmap = FeatureMap(features)
    logger.info(
        "Generated world %r: %d poles, %d corners, route %.1f m",
        spec.name,
        fmap.count(FeatureClass.POLE),
        fmap.count(FeatureClass.CORNER),
        route.length,
    )
    return fmap, route


def world_summary(fmap: FeatureMap, route: Trajectory) -> dict:
    return {
        "poles": fmap.count(FeatureClass.POLE),
        "corners": fmap.count(FeatureClass.CORNER),
        "features": len(fmap),
        "route_length": route.length,
    }


def _in_zones(s: float, zones: list[tuple[float, float]]) -> bool:
    return any(start <= s <= end for start, end in zones)


def _observe(
    fmap: FeatureMap,
    pose: Pose2D,
    lidar: LidarSpec,
    detect_rng: np.random.Generator,
    clutter_rng: np.random.Generator,
) -> tuple[Observation, ...]:
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    visible: list[tuple[int, FeatureClass, float, float]] = []
    for cls in (FeatureClass.POLE, FeatureClass.CORNER):
        pts = fmap.points(cls)
        ids = fmap.ids(cls)
        for idx in fmap.within(cls, pose.position, lidar.max_range):
            dx, dy = pts[idx] - pose.position
            x, y = c * dx + s * dy, -s * dx + c * dy
            rng_ = math.hypot(x, y)
            if rng_ < lidar.min_range:
                continue
            if abs(math.atan2(y, x)) > 0.5 * lidar.fov:
                continue
            visible.append((int(ids[idx]), cls, x, y))
    visible.sort(key=lambda v: v[0])

    observations = []
    for _, cls, x, y in visible:
        if detect_rng.uniform() >= lidar.detection_probability:
            continue
        nx, ny = detect_rng.normal(0.0, 1.0, 2) * lidar.sigma
        observations.append(Observation(cls, x + nx, y + ny))

    n_clutter = int(clutter_rng.poisson(lidar.clutter_rate)) if lidar.clutter_rate > 0 else 0
    for _ in range(n_clutter):
        r = math.sqrt(clutter_rng.uniform(lidar.min_range**2, lidar.max_range**2))
        bearing = clutter_rng.uniform(-0.5 * lidar.fov, 0.5 * lidar.fov)
        cls = FeatureClass.POLE if clutter_rng.uniform() < 0.5 else FeatureClass.CORNER
        observations.append(Observation(cls, r * math.cos(bearing), r * math.sin(bearing)))
    return tuple(observations)


def _drive_plan(route: Trajectory, step: float, laps: int, reverse: bool) -> list[tuple[float, float, float]]:
    """``(distance, heading, route_arc)`` per odometry step.

    ``laps`` traversals in route order, then with ``reverse`` a turn on the spot
    and the same distance back the other way.
    """
    length = route.length
    n_steps = int(math.floor(laps * length / step + 1e-9))

    def ahead(x: float) -> float:
        # (0, length]
        return x - length * math.floor((x - 1e-9) / length)

    def behind(x: float) -> float:
        # [0, length)
        return x - length * math.floor((x + 1e-9) / length)

    plan = []
    for k in range(1, n_steps + 1):
        arc = ahead(k * step)
        plan.append((step, route.pose_at_arc(arc).heading, arc))
    if reverse and plan:
        end = plan[-1][2]
        plan.append((0.0, wrap_angle(route.pose_at_arc(end).heading + math.pi), end))
        for k in range(1, n_steps + 1):
            arc = behind(end - k * step)
            plan.append((step, wrap_angle(route.pose_at_arc(arc).heading + math.pi), arc))
    return plan


def simulate_run(
    fmap: FeatureMap,
    route: Trajectory,
    sensors: SensorSpec,
    speed: float,
    seed: int,
    gps_dropout_zones: Optional[list[tuple[float, float]]] = None,
    laps: int = 1,
    reverse: bool = False,
) -> Dataset:
    """Drive the route at constant speed and record every sensor stream.

    Repeated laps need a closed route. Dropout zones are route arc lengths, so
    they recur on every lap in either direction.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    if laps < 1:
        raise ValueError("laps must be at least 1")
    if laps > 1 and np.hypot(*(route.samples[-1].pose.position - route.samples[0].pose.position)) > 1e-6:
        raise ValueError("repeated laps need a closed route")
    odo: OdometrySpec = sensors.odometry
    gps: GpsSpec = sensors.gps
    lidar: LidarSpec = sensors.lidar
    dropouts = list(gps_dropout_zones or [])

    odo_rng, gps_rng, detect_rng, clutter_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )

    dt = odo.period
    plan = _drive_plan(route, speed * dt, laps, reverse)

    pose = route.pose_at_arc(0.0)
    times = [0.0]
    poses = [pose]
    route_arcs = [0.0]
    odometry = []
    prev_heading = pose.heading
    for k, (distance, target, route_arc) in enumerate(plan, start=1):
        dheading = wrap_angle(target - prev_heading)
        prev_heading = target
        pose = integrate_odometry(pose, distance, dheading)
        t = k * dt
        times.append(t)
        poses.append(pose)
        route_arcs.append(route_arc)

        noise_v, noise_w = odo_rng.normal(0.0, 1.0, 2)
        odometry.append(
            OdometryIncrement(
                t,
                distance + noise_v * odo.velocity_sigma * dt,
                dheading + (odo.yaw_rate_bias + noise_w * odo.yaw_rate_sigma) * dt,
            )
        )
    truth = Trajectory.from_poses(times, poses)

    readings = []
    frames = []
    next_gps = 0.0
    next_frame = 0.0
    for sample, route_arc in zip(truth.samples, route_arcs):
        if sample.t >= next_gps - 1e-9:
            next_gps += gps.period
            ne, nn = gps_rng.normal(0.0, 1.0, 2) * gps.sigma
            if not _in_zones(route_arc, dropouts):
                readings.append(
                    GpsReading(sample.t, sample.pose.easting + ne, sample.pose.northing + nn, gps.sigma)
                )
        if sample.t >= next_frame - 1e-9:
            next_frame += lidar.period
            observations = _observe(fmap, sample.pose, lidar, detect_rng, clutter_rng)
            frames.append(FeatureFrame(sample.t, observations, sample.pose))

    logger.info(
        "Simulated run: %d odometry, %d gps, %d frames over %.1f m",
        len(odometry),
        len(readings),
        len(frames),
        truth.length,
    )
    return Dataset(truth, tuple(odometry), tuple(readings), tuple(frames), seed=seed, speed=speed)


# --- Presets ---


def rounded_rectangle(width: float, height: float, radius: float, segments: int = 8) -> list[tuple[float, float]]:
    """Closed loop waypoints, counter-clockwise, starting East-bound at the origin.

    ``width`` and ``height`` are the straight-section lengths; each corner is a
    quarter circle of ``radius`` approximated by ``segments`` chords.
    """
    points = [(0.0, 0.0)]
    x, y, heading = 0.0, 0.0, 0.0
    for straight in (width, height, width, height):
        x += straight * math.cos(heading)
        y += straight * math.sin(heading)
        points.append((x, y))
        cx, cy = x - radius * math.sin(heading), y + radius * math.cos(heading)
        for k in range(1, segments + 1):
            a = heading - 0.5 * math.pi + 0.5 * math.pi * k / segments
            points.append((cx + radius * math.cos(a), cy + radius * math.sin(a)))
        heading += 0.5 * math.pi
        x, y = points[-1]
    points[-1] = (0.0, 0.0)
    return points


def _corner_length(radius: float, segments: int) -> float:
    return segments * 2.0 * radius * math.sin(0.25 * math.pi / segments)


def _loop_with_length(total: float, width: float, radius: float = 10.0, segments: int = 8) -> RouteSpec:
    height = 0.5 * (total - 2.0 * width - 4.0 * _corner_length(radius, segments))
    return RouteSpec(waypoints=rounded_rectangle(width, height, radius, segments), closed=True)


QUAD_LENGTH = 470.0
QUAD_DESERT = (150.0, 200.0)


def quad_world(seed: int = 7) -> WorldSpec:
    """470 m loop with a 50 m zero-density zone at 150-200 m and one GPS dropout."""
    return WorldSpec(
        name="quad",
        route=_loop_with_length(QUAD_LENGTH, width=120.0),
        zones=[
            ZoneSpec(start=0.0, end=QUAD_DESERT[0], pole_density=60.0, corner_density=30.0, name="buildings-south"),
            ZoneSpec(start=QUAD_DESERT[0], end=QUAD_DESERT[1], name="desert"),
            ZoneSpec(start=QUAD_DESERT[1], end=330.0, pole_density=55.0, corner_density=25.0, name="buildings-north"),
            ZoneSpec(start=330.0, end=QUAD_LENGTH, pole_density=65.0, corner_density=30.0, name="trees-west"),
        ],
        gps_dropout_zones=[(380.0, 420.0)],
        seed=seed,
    )


def rich_world(seed: int = 11) -> WorldSpec:
    return WorldSpec(
        name="rich",
        route=_loop_with_length(QUAD_LENGTH, width=120.0),
        zones=[ZoneSpec(start=0.0, end=QUAD_LENGTH, pole_density=70.0, corner_density=35.0, name="dense")],
        seed=seed,
    )


def avenue_world(seed: int = 3) -> WorldSpec:
    return WorldSpec(
        name="avenue",
        route=RouteSpec(waypoints=[(0.0, 0.0), (250.0, 0.0)]),
        zones=[ZoneSpec(start=0.0, end=250.0, pole_density=50.0, corner_density=40.0, name="avenue")],
        seed=seed,
    )


def sparse_world(seed: int = 5) -> WorldSpec:
    return WorldSpec(
        name="sparse",
        route=_loop_with_length(QUAD_LENGTH, width=120.0),
        zones=[ZoneSpec(start=0.0, end=QUAD_LENGTH, pole_density=25.0, corner_density=25.0, name="sparse")],
        seed=seed,
    )


WORLD_PRESETS = {
    "quad": quad_world,
    "rich": rich_world,
    "avenue": avenue_world,
    "sparse": sparse_world,
}


def default_sensors() -> SensorSpec:
    """Forward-facing 15 m feature lidar, 2 m GPS, low-grade odometry."""
    return SensorSpec(
        lidar=LidarSpec(max_range=15.0, fov=math.pi, detection_probability=0.9, sigma=0.05, clutter_rate=0.5),
        gps=GpsSpec(sigma=2.0, period=1.0, speed_threshold=0.5),
        odometry=OdometrySpec(velocity_sigma=0.05, yaw_rate_sigma=0.005, yaw_rate_bias=0.001),
    )


def noise_free_sensors() -> SensorSpec:
    return default_sensors().noise_free()


SENSOR_PRESETS = {
    "default": default_sensors,
    "noise_free": noise_free_sensors,
}
