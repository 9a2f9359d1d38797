"""
Class-constrained 2D point-feature ICP against a prior feature map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import FeatureClass, FeatureFrame, FeatureMap, Pose2D, compose, transform_points
from .errors import DegenerateAlignmentError
from .schemas import IcpConfig

# Frame points closer than this to their centroid are treated as coincident.
_COINCIDENT = 1e-12


@dataclass(frozen=True, slots=True)
class MatchResult:
    converged: bool
    pose: Pose2D
    rms: float
    inlier_count: int
    iterations: int


@dataclass(frozen=True, slots=True)
class Correspondence:
    observation: int
    observation_class: FeatureClass
    map_feature_id: int


@dataclass(frozen=True)
class IcpIteration:
    """Per-iteration record kept when a trace list is passed to ``icp_match``."""

    iteration: int
    correspondences: tuple[Correspondence, ...]
    sse_before: float
    sse_after: float
    delta: Pose2D


def _rigid_align_arrays(src: np.ndarray, dst: np.ndarray) -> Pose2D:
    if len(src) < 2:
        raise DegenerateAlignmentError("rigid alignment needs at least two correspondences")
    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    a = src - src_c
    b = dst - dst_c
    if np.max(np.abs(a)) < _COINCIDENT:
        raise DegenerateAlignmentError("all frame points coincide; rotation is unobservable")
    cross = float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))
    dot = float(np.sum(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]))
    theta = math.atan2(cross, dot)
    c, s = math.cos(theta), math.sin(theta)
    tx = dst_c[0] - (c * src_c[0] - s * src_c[1])
    ty = dst_c[1] - (s * src_c[0] + c * src_c[1])
    return Pose2D(tx, ty, theta)


def rigid_align(correspondences: Sequence) -> Pose2D:
    """Least-squares rotation + translation mapping frame points onto map points.

    ``correspondences`` is a sequence of ``(frame_point, map_point)`` pairs; the
    result ``T`` minimises ``sum |T(frame) - map|^2``.
    """
    pairs = np.asarray(correspondences, dtype=float).reshape(-1, 2, 2)
    return _rigid_align_arrays(pairs[:, 0, :], pairs[:, 1, :])


def _sse(src: np.ndarray, dst: np.ndarray) -> float:
    return float(np.sum((src - dst) ** 2))


class _Correspondences:
    """Class-constrained nearest-neighbour lookup for one frame against one map."""

    def __init__(self, classes: Sequence[FeatureClass], points: np.ndarray, fmap: FeatureMap, gate: float):
        self.points = points
        self.fmap = fmap
        self.gate = gate
        self.classes = list(classes)
        self.groups = {
            cls: np.flatnonzero(np.array([c == cls for c in self.classes], dtype=bool))
            for cls in set(self.classes)
        }

    def __call__(self, pose: Pose2D):
        global_pts = transform_points(pose, self.points)
        n = len(self.points)
        dist = np.full(n, np.inf)
        target = np.zeros((n, 2))
        index = np.full(n, -1, dtype=int)
        for cls, members in self.groups.items():
            d, idx = self.fmap.nearest(cls, global_pts[members])
            dist[members] = d
            index[members] = idx
            hit = idx >= 0
            target[members[hit]] = self.fmap.points(cls)[idx[hit]]
        mask = dist <= self.gate
        return global_pts, target, index, dist, mask

    def trace(self, index: np.ndarray, mask: np.ndarray) -> tuple[Correspondence, ...]:
        return tuple(
            Correspondence(int(i), self.classes[i], int(self.fmap.ids(self.classes[i])[index[i]]))
            for i in np.flatnonzero(mask)
        )


def icp_points(
    prior: Pose2D,
    classes: Sequence[FeatureClass],
    points: np.ndarray,
    fmap: FeatureMap,
    cfg: IcpConfig,
    trace: Optional[list] = None,
) -> MatchResult:
    """ICP on pre-extracted frame arrays; ``icp_match`` is the frame-level entry point."""
    if len(points) == 0:
        return MatchResult(False, prior, math.inf, 0, 0)

    correspond = _Correspondences(classes, np.asarray(points, dtype=float).reshape(-1, 2), fmap, cfg.correspondence_gate)
    tol_m, tol_rad = cfg.convergence_tol
    pose = prior
    settled = False
    iterations = 0
    for iteration in range(1, cfg.max_iterations + 1):
        iterations = iteration
        global_pts, target, index, _, mask = correspond(pose)
        if mask.sum() < 2:
            break
        src, dst = global_pts[mask], target[mask]
        try:
            delta = _rigid_align_arrays(src, dst)
        except DegenerateAlignmentError:
            break
        if trace is not None:
            moved = transform_points(delta, src)
            trace.append(
                IcpIteration(iteration, correspond.trace(index, mask), _sse(src, dst), _sse(moved, dst), delta)
            )
        pose = compose(delta, pose)
        if math.hypot(delta.easting, delta.northing) < tol_m and abs(delta.heading) < tol_rad:
            settled = True
            break

    _, _, _, dist, mask = correspond(pose)
    inliers = int(mask.sum())
    rms = math.sqrt(float(np.mean(dist[mask] ** 2))) if inliers else math.inf
    converged = settled and inliers >= cfg.min_inliers and rms <= cfg.max_rms
    return MatchResult(converged, pose, rms, inliers, iterations)


def icp_match(
    prior: Pose2D,
    frame: FeatureFrame,
    fmap: FeatureMap,
    cfg: IcpConfig,
    trace: Optional[list] = None,
) -> MatchResult:
    """Align a feature frame to the map starting from ``prior``.

    Correspondences are frame-to-map nearest neighbours of the same class within
    the gate. Failures are encoded in ``converged=False``, never raised.
    """
    return icp_points(prior, frame.classes(), frame.points(), fmap, cfg, trace)
