"""
Shared geometric and domain types: planar poses, classed point landmarks,
sensor frames, trajectories, and the pose algebra used by every other module.

All types are immutable after construction and every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyRouteError, InvalidAngleError

TWO_PI = 2.0 * math.pi
# Values this close above -pi are folded onto +pi so the interval stays (-pi, pi].
_SEAM_EPS = 1e-12


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(theta):
        raise InvalidAngleError(f"Cannot wrap non-finite angle {theta!r}")
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi + _SEAM_EPS or wrapped > math.pi:
        return math.pi
    return wrapped


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorised ``wrap_angle`` for numpy arrays."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidAngleError("Cannot wrap non-finite angles")
    wrapped = np.remainder(theta + math.pi, TWO_PI) - math.pi
    return np.where(wrapped <= -math.pi + _SEAM_EPS, math.pi, wrapped)


@dataclass(frozen=True, slots=True)
class Pose2D:
    """Planar pose in the map frame; heading is measured from East."""

    easting: float = 0.0
    northing: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "easting", float(self.easting))
        object.__setattr__(self, "northing", float(self.northing))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @classmethod
    def identity(cls) -> "Pose2D":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Pose2D":
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.easting, self.northing, self.heading], dtype=float)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.easting, self.northing], dtype=float)

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.easting - other.easting, self.northing - other.northing)

    def heading_error(self, other: "Pose2D") -> float:
        return abs(wrap_angle(self.heading - other.heading))


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Return ``a (+) b``: pose ``b``, expressed in the frame of ``a``, mapped to global."""
    c, s = math.cos(a.heading), math.sin(a.heading)
    return Pose2D(
        a.easting + c * b.easting - s * b.northing,
        a.northing + s * b.easting + c * b.northing,
        a.heading + b.heading,
    )


def inverse(p: Pose2D) -> Pose2D:
    c, s = math.cos(p.heading), math.sin(p.heading)
    return Pose2D(
        -(c * p.easting + s * p.northing),
        -(-s * p.easting + c * p.northing),
        -p.heading,
    )


def relative(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of ``b`` in the frame of ``a``."""
    return compose(inverse(a), b)


def transform_points(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """Rotate ``(N, 2)`` sensor-frame points by the heading and translate them."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    rotation = np.array([[c, -s], [s, c]])
    return points @ rotation.T + np.array([pose.easting, pose.northing])


def integrate_odometry(pose: Pose2D, distance: float, dheading: float) -> Pose2D:
    """Midpoint motion model shared by the simulator and the filter prediction."""
    mid = pose.heading + 0.5 * dheading
    return Pose2D(
        pose.easting + distance * math.cos(mid),
        pose.northing + distance * math.sin(mid),
        pose.heading + dheading,
    )


def motion_model(states: np.ndarray, distance: float, dheading: float) -> np.ndarray:
    """Vectorised ``integrate_odometry`` over rows of ``[easting, northing, heading]``."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    mid = states[:, 2] + 0.5 * dheading
    out = np.empty_like(states)
    out[:, 0] = states[:, 0] + distance * np.cos(mid)
    out[:, 1] = states[:, 1] + distance * np.sin(mid)
    out[:, 2] = wrap_angles(states[:, 2] + dheading)
    return out


class FeatureClass(str, Enum):
    POLE = "pole"
    CORNER = "corner"


ALL_CLASSES = (FeatureClass.POLE, FeatureClass.CORNER)


@dataclass(frozen=True, slots=True)
class MapFeature:
    id: int
    cls: FeatureClass
    easting: float
    northing: float


class FeatureMap:
    """Immutable prior map of classed 2D point landmarks.

    Per-class KD-trees are built once at construction; nearest-neighbour
    queries are exact, so repeated queries are deterministic.
    """

    __slots__ = ("_features", "_points", "_ids", "_trees")

    def __init__(self, features: Iterable[MapFeature] = ()):
        self._features = tuple(features)
        ids = [f.id for f in self._features]
        if len(set(ids)) != len(ids):
            raise ValueError("Feature ids must be unique within a map")
        for f in self._features:
            if not (math.isfinite(f.easting) and math.isfinite(f.northing)):
                raise ValueError(f"Feature {f.id} has a non-finite position")

        self._points: dict[FeatureClass, np.ndarray] = {}
        self._ids: dict[FeatureClass, np.ndarray] = {}
        self._trees: dict[FeatureClass, Optional[cKDTree]] = {}
        for cls in ALL_CLASSES:
            members = [f for f in self._features if f.cls == cls]
            pts = np.array([[f.easting, f.northing] for f in members], dtype=float).reshape(-1, 2)
            self._points[cls] = pts
            self._ids[cls] = np.array([f.id for f in members], dtype=int)
            self._trees[cls] = cKDTree(pts) if len(pts) else None

    @property
    def features(self) -> tuple[MapFeature, ...]:
        return self._features

    def __len__(self) -> int:
        return len(self._features)

    def __iter__(self):
        return iter(self._features)

    def count(self, cls: FeatureClass) -> int:
        return len(self._points[cls])

    def points(self, cls: FeatureClass) -> np.ndarray:
        return self._points[cls]

    def ids(self, cls: FeatureClass) -> np.ndarray:
        return self._ids[cls]

    def nearest(self, cls: FeatureClass, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact nearest same-class map feature for each query point.

        Returns ``(distances, indices)`` into ``points(cls)``; both empty arrays
        broadcast to ``inf`` / ``-1`` when the class has no map features.
        """
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        tree = self._trees[cls]
        if tree is None or len(query) == 0:
            return np.full(len(query), np.inf), np.full(len(query), -1, dtype=int)
        distances, indices = tree.query(query, k=1)
        return np.asarray(distances, dtype=float), np.asarray(indices, dtype=int)

    def within(self, cls: FeatureClass, center: np.ndarray, radius: float) -> np.ndarray:
        """Indices (sorted) of class features within ``radius`` of ``center``."""
        tree = self._trees[cls]
        if tree is None:
            return np.empty(0, dtype=int)
        return np.array(sorted(tree.query_ball_point(center, radius)), dtype=int)

    def restrict(self, classes: Iterable[FeatureClass]) -> "FeatureMap":
        keep = set(classes)
        return FeatureMap(f for f in self._features if f.cls in keep)


@dataclass(frozen=True, slots=True)
class Observation:
    cls: FeatureClass
    x: float
    y: float


@dataclass(frozen=True, slots=True)
class FeatureFrame:
    """One lidar feature observation frame in the sensor frame."""

    timestamp: float
    observations: tuple[Observation, ...] = ()
    true_pose: Optional[Pose2D] = None

    def __len__(self) -> int:
        return len(self.observations)

    def points(self) -> np.ndarray:
        return np.array([[o.x, o.y] for o in self.observations], dtype=float).reshape(-1, 2)

    def classes(self) -> list[FeatureClass]:
        return [o.cls for o in self.observations]

    def restrict(self, classes: Iterable[FeatureClass]) -> "FeatureFrame":
        keep = set(classes)
        return FeatureFrame(
            self.timestamp,
            tuple(o for o in self.observations if o.cls in keep),
            self.true_pose,
        )


def transform_frame_to_global(
    pose: Pose2D, frame: FeatureFrame
) -> list[tuple[FeatureClass, tuple[float, float]]]:
    if not frame.observations:
        return []
    global_pts = transform_points(pose, frame.points())
    return [
        (obs.cls, (float(pt[0]), float(pt[1])))
        for obs, pt in zip(frame.observations, global_pts)
    ]


def cumulative_arc_length(positions: np.ndarray) -> np.ndarray:
    """Cumulative Euclidean distance along ``(N, 2)`` positions, starting at 0."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(positions) == 0:
        return np.empty(0)
    steps = np.hypot(*np.diff(positions, axis=0).T)
    return np.concatenate(([0.0], np.cumsum(steps)))


@dataclass(frozen=True, slots=True)
class TrajectorySample:
    t: float
    pose: Pose2D
    arc_length: float


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered poses with cumulative arc length (positions only)."""

    samples: tuple[TrajectorySample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        times = [s.t for s in self.samples]
        arcs = [s.arc_length for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("Trajectory timestamps must be strictly increasing")
        if arcs and arcs[0] != 0.0:
            raise ValueError("Trajectory arc length must start at 0")
        if any(b < a for a, b in zip(arcs, arcs[1:])):
            raise ValueError("Trajectory arc length must be non-decreasing")

    @classmethod
    def from_poses(cls, times: Sequence[float], poses: Sequence[Pose2D]) -> "Trajectory":
        if len(times) != len(poses):
            raise ValueError("times and poses differ in length")
        arcs = cumulative_arc_length(np.array([p.position for p in poses]).reshape(-1, 2))
        return cls(tuple(TrajectorySample(float(t), p, float(s)) for t, p, s in zip(times, poses, arcs)))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def length(self) -> float:
        return self.samples[-1].arc_length if self.samples else 0.0

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=float)

    def arc_lengths(self) -> np.ndarray:
        return np.array([s.arc_length for s in self.samples], dtype=float)

    def positions(self) -> np.ndarray:
        return np.array([s.pose.position for s in self.samples], dtype=float).reshape(-1, 2)

    def headings(self) -> np.ndarray:
        return np.array([s.pose.heading for s in self.samples], dtype=float)

    def pose_at_arc(self, s: float) -> Pose2D:
        """Pose at arc length ``s``: linear position, heading of the enclosing segment."""
        if len(self.samples) < 2:
            raise EmptyRouteError("Trajectory needs at least two samples to interpolate")
        arcs = self.arc_lengths()
        s = min(max(s, 0.0), arcs[-1])
        i = int(np.searchsorted(arcs, s, side="right")) - 1
        i = min(max(i, 0), len(arcs) - 2)
        a, b = self.samples[i], self.samples[i + 1]
        span = b.arc_length - a.arc_length
        frac = 0.0 if span == 0.0 else (s - a.arc_length) / span
        e = a.pose.easting + frac * (b.pose.easting - a.pose.easting)
        n = a.pose.northing + frac * (b.pose.northing - a.pose.northing)
        return Pose2D(e, n, a.pose.heading)
