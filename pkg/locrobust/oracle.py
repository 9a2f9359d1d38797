"""
Brute-force reference implementations used to validate the optimised paths.

These are deliberately naive: exhaustive grids and literal window enumeration.
``run_verification`` compares them against the main implementations and backs
the ``verify`` subcommand.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import config
from .core import FeatureClass, FeatureFrame, FeatureMap, MapFeature, Observation, Pose2D, inverse, transform_points
from .matcher import icp_match, rigid_align
from .metrics import PauCurve, event_arcs, pau_curve
from .schemas import IcpConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BruteAlignment:
    pose: Pose2D
    sse: float
    degenerate: bool


def brute_rigid_align(correspondences: Sequence, resolution: float = 1e-3) -> BruteAlignment:
    """Exhaustive coarse-to-fine grid search over ``(tx, ty, theta)`` minimising SSE.

    With fewer than two distinct frame points the rotation is unobservable: the
    translation is returned at zero rotation and the result is flagged degenerate.
    """
    pairs = np.asarray(correspondences, dtype=float).reshape(-1, 2, 2)
    src, dst = pairs[:, 0, :], pairs[:, 1, :]
    if len(src) == 0:
        return BruteAlignment(Pose2D.identity(), 0.0, True)
    if len(src) < 2 or np.max(np.abs(src - src.mean(axis=0))) < 1e-12:
        t = (dst - src).mean(axis=0)
        return BruteAlignment(Pose2D(t[0], t[1], 0.0), float(np.sum((src + t - dst) ** 2)), True)

    # For any rotation the optimal translation lies within |src centroid| of the dst centroid.
    center = np.array([*dst.mean(axis=0), 0.0])
    half = np.array([np.linalg.norm(src.mean(axis=0)) + 1.0] * 2 + [math.pi])
    counts = np.array([41, 41, 73])
    while True:
        tx = np.linspace(center[0] - half[0], center[0] + half[0], counts[0])
        ty = np.linspace(center[1] - half[1], center[1] + half[1], counts[1])
        th = np.linspace(center[2] - half[2], center[2] + half[2], counts[2])
        c, s = np.cos(th)[:, None], np.sin(th)[:, None]
        rx = c * src[:, 0] - s * src[:, 1] - dst[:, 0]
        ry = s * src[:, 0] + c * src[:, 1] - dst[:, 1]
        # SSE(theta, tx, ty) separates into an x part and a y part.
        sse_x = ((rx[:, None, :] + tx[None, :, None]) ** 2).sum(axis=2)
        sse_y = ((ry[:, None, :] + ty[None, :, None]) ** 2).sum(axis=2)
        total = sse_x[:, :, None] + sse_y[:, None, :]
        a, b, d = np.unravel_index(int(np.argmin(total)), total.shape)
        center = np.array([tx[b], ty[d], th[a]])
        steps = 2.0 * half / (counts - 1)
        if np.all(steps <= resolution):
            return BruteAlignment(Pose2D(center[0], center[1], center[2]), float(total[a, b, d]), False)
        half = 2.0 * steps
        counts = np.array([21, 21, 21])


def brute_pau(
    events: Sequence,
    trajectory_length: float,
    lengths: Sequence[float],
    stride: float,
) -> PauCurve:
    """Window-by-window PAU with explicit set counting."""
    arcs = [float(a) for a in event_arcs(events)]
    longest = max(lengths)
    starts = []
    k = 0
    while k <= (trajectory_length - longest) / stride + config.LATTICE_TOLERANCE:
        starts.append(k * stride)
        k += 1

    probabilities = []
    for length in lengths:
        traj = set(starts)
        absent = {s for s in traj if not any(s < e < s + length for e in arcs)}
        probabilities.append(len(absent) / len(traj))
    return PauCurve(np.array(lengths, dtype=float), np.array(probabilities), stride, trajectory_length, len(starts))


# --- Verification ---


@dataclass(frozen=True)
class VerificationResult:
    name: str
    passed: bool
    cases: int
    detail: str = ""


def _check_pau_example() -> VerificationResult:
    # Nine windows of length 2 m, three of them without an update.
    events = [1.5, 3.5, 5.5]
    fast = pau_curve(events, 10.0, [2.0], 1.0)
    slow = brute_pau(events, 10.0, [2.0], 1.0)
    ok = fast.window_count == 9 and fast.probabilities[0] == 1.0 / 3.0 and np.array_equal(
        fast.probabilities, slow.probabilities
    )
    return VerificationResult("pau_example", bool(ok), 1, f"P={fast.probabilities[0]:.4f}")


def random_event_log(rng: np.random.Generator, length: float, max_events: int = 20) -> list[float]:
    count = int(rng.integers(0, max_events + 1))
    return sorted(float(e) for e in np.round(rng.uniform(0.0, length, count), 1))


def _check_pau_random(rng: np.random.Generator, cases: int) -> VerificationResult:
    lengths = [0.5 * k for k in range(1, 21)]
    failures = 0
    for _ in range(cases):
        length = float(rng.uniform(10.0, 50.0))
        events = random_event_log(rng, length)
        fast = pau_curve(events, length, lengths, 0.5)
        slow = brute_pau(events, length, lengths, 0.5)
        extra = sorted(events + random_event_log(rng, length, 5))
        denser = pau_curve(extra, length, lengths, 0.5)
        if (
            not np.array_equal(fast.probabilities, slow.probabilities)
            or np.any(np.diff(fast.probabilities) > 0)
            or np.any(denser.probabilities > fast.probabilities)
        ):
            failures += 1
    return VerificationResult("pau_brute_force", failures == 0, cases, f"{failures} mismatches")


def _check_rigid_align(rng: np.random.Generator, cases: int, resolution: float = 1e-3) -> VerificationResult:
    failures = 0
    for _ in range(cases):
        n = int(rng.integers(3, 11))
        src = rng.uniform(-10.0, 10.0, (n, 2))
        truth = Pose2D(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-math.pi, math.pi))
        dst = transform_points(truth, src) + rng.normal(0.0, 0.01, (n, 2))
        pairs = np.stack([src, dst], axis=1)
        closed = rigid_align(pairs)
        brute = brute_rigid_align(pairs, resolution)
        if (
            abs(closed.easting - brute.pose.easting) > 2 * resolution
            or abs(closed.northing - brute.pose.northing) > 2 * resolution
            or abs(closed.heading_error(brute.pose)) > 2 * resolution
        ):
            failures += 1
    return VerificationResult("rigid_align_brute_force", failures == 0, cases, f"{failures} mismatches")


def random_constellation(
    rng: np.random.Generator, count: int, min_spacing: float = 2.0, extent: float = 15.0
) -> list[MapFeature]:
    """Features at least ``min_spacing`` apart, drawn by rejection sampling."""
    points: list[np.ndarray] = []
    while len(points) < count:
        p = rng.uniform(-extent, extent, 2)
        if all(np.hypot(*(p - q)) >= min_spacing for q in points):
            points.append(p)
    classes = (FeatureClass.POLE, FeatureClass.CORNER)
    return [MapFeature(i, classes[int(rng.integers(0, 2))], float(p[0]), float(p[1])) for i, p in enumerate(points)]


def perturbed_prior(rng: np.random.Generator, truth: Pose2D, local: np.ndarray, budget: float) -> Pose2D:
    """A prior that moves no projected feature by more than ``budget`` from its true position.

    The shift is drawn up to the full budget; the heading error takes whatever
    is left over, scaled by the farthest feature's range.
    """
    reach = max(float(np.hypot(local[:, 0], local[:, 1]).max()), 1e-9)
    shift = rng.uniform(0.0, budget)
    angle = rng.uniform(-math.pi, math.pi)
    turn = rng.uniform(-1.0, 1.0) * (budget - shift) / reach
    return Pose2D(truth.easting + shift * math.cos(angle), truth.northing + shift * math.sin(angle), truth.heading + turn)


def _check_icp_recovery(rng: np.random.Generator, cases: int) -> VerificationResult:
    cfg = IcpConfig()
    failures = 0
    min_spacing = 2.0
    # Under half the spacing every nearest neighbour is the true partner.
    budget = 0.4 * min_spacing
    widest = 0.0
    for _ in range(cases):
        features = random_constellation(rng, int(rng.integers(3, 21)), min_spacing)
        fmap = FeatureMap(features)
        truth = Pose2D(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi))
        local = transform_points(inverse(truth), np.array([[f.easting, f.northing] for f in features]))
        frame = FeatureFrame(0.0, tuple(Observation(f.cls, x, y) for f, (x, y) in zip(features, local)), truth)
        prior = perturbed_prior(rng, truth, local, budget)
        widest = max(widest, float(np.hypot(*(transform_points(prior, local) - transform_points(truth, local)).T).max()))
        result = icp_match(prior, frame, fmap, cfg)
        if not (
            result.converged
            and result.pose.distance_to(truth) <= 1e-6
            and abs(result.pose.heading_error(truth)) <= 1e-8
        ):
            failures += 1
    detail = f"{failures} failures, widest prior error {widest / min_spacing:.2f} of spacing"
    return VerificationResult("icp_exact_recovery", failures == 0, cases, detail)


def run_verification(seed: int = 0, scale: float = 1.0) -> list[VerificationResult]:
    """Oracle-vs-implementation comparisons; ``scale`` shrinks the random case counts."""
    rng = np.random.default_rng(seed)
    results = [
        _check_pau_example(),
        _check_pau_random(rng, max(1, int(200 * scale))),
        _check_rigid_align(rng, max(1, int(100 * scale))),
        _check_icp_recovery(rng, max(1, int(1000 * scale))),
    ]
    for r in results:
        logger.info("verify %s: %s (%d cases, %s)", r.name, "pass" if r.passed else "FAIL", r.cases, r.detail)
    return results
