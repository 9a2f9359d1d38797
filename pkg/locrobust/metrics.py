"""
Localisation robustness metrics.

Valid Prior Threshold (VPT): a lattice search over pose-prior perturbations
around the true pose, summarised as a radius per map location and profiled
along a route.

Probability of Absence of Updates (PAU): for every window length l, the share
of route windows that receive no accepted global pose update.

Robustness margin: VPT radius minus the filter's 95 % position bound.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid

from . import config
from .core import FeatureFrame, FeatureMap, Pose2D
from .errors import (
    CutoffNotReachedError,
    EmptyOverlapError,
    EmptyWindowSetError,
    GridMismatchError,
    MisalignedSliceError,
)
from .fusion import UpdateEvent
from .matcher import icp_points
from .schemas import IcpConfig, VptConfig, VptGridSpec

logger = logging.getLogger(__name__)


# --- Valid Prior Threshold ---


@dataclass(frozen=True)
class VptBoundary:
    """Validity lattice ``valid[i_x, i_y, i_theta]`` over the grid offsets."""

    arc_length: float
    true_pose: Pose2D
    grid: VptGridSpec
    valid: np.ndarray

    def __post_init__(self):
        if self.valid.shape != self.grid.shape:
            raise ValueError(f"lattice shape {self.valid.shape} does not match grid {self.grid.shape}")

    @property
    def zero_offset_valid(self) -> bool:
        i, j, k = (n // 2 for n in self.valid.shape)
        return bool(self.valid[i, j, k])

    def cells(self):
        """Yield ``(dx, dy, dtheta, valid)`` in lattice order."""
        xy = self.grid.xy_offsets()
        th = self.grid.heading_offsets()
        for i, dx in enumerate(xy):
            for j, dy in enumerate(xy):
                for k, dth in enumerate(th):
                    yield float(dx), float(dy), float(dth), bool(self.valid[i, j, k])


def _offsets(grid: VptGridSpec) -> list[tuple[float, float, float]]:
    xy = grid.xy_offsets()
    th = grid.heading_offsets()
    return [(float(dx), float(dy), float(dth)) for dx in xy for dy in xy for dth in th]


def vpt_evaluate(
    frame: FeatureFrame,
    fmap: FeatureMap,
    true_pose: Pose2D,
    grid: VptGridSpec,
    icp_cfg: IcpConfig,
    validity_tol: tuple[float, float] = (0.5, 0.05),
    arc_length: float = 0.0,
    threads: int = 1,
) -> VptBoundary:
    """Run ICP from every perturbed prior on the lattice and mark true-pose recoveries.

    A cell is valid when ICP converges and lands within ``validity_tol`` of the
    true pose. Cells are independent; results are assembled in lattice order.
    """
    tol_m, tol_rad = validity_tol
    classes = frame.classes()
    points = frame.points()

    def evaluate(offset: tuple[float, float, float]) -> bool:
        dx, dy, dth = offset
        prior = Pose2D(true_pose.easting + dx, true_pose.northing + dy, true_pose.heading + dth)
        result = icp_points(prior, classes, points, fmap, icp_cfg)
        return (
            result.converged
            and result.pose.distance_to(true_pose) <= tol_m
            and abs(result.pose.heading_error(true_pose)) <= tol_rad
        )

    offsets = _offsets(grid)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flags = list(pool.map(evaluate, offsets))
    else:
        flags = [evaluate(o) for o in offsets]

    boundary = VptBoundary(arc_length, true_pose, grid, np.array(flags, dtype=bool).reshape(grid.shape))
    if len(frame) >= icp_cfg.min_inliers and not boundary.zero_offset_valid:
        logger.warning(
            "Exact prior failed to validate at %.1f m (%d observations)", arc_length, len(frame)
        )
    return boundary


def _slice_mask(grid: VptGridSpec, theta_slice: float) -> np.ndarray:
    ratio = theta_slice / grid.heading_step
    if theta_slice < 0 or abs(ratio - round(ratio)) > config.LATTICE_TOLERANCE:
        raise MisalignedSliceError(
            f"theta_slice {theta_slice} is not a multiple of heading_step {grid.heading_step}"
        )
    if round(ratio) * grid.heading_step > grid.heading_extent + config.LATTICE_TOLERANCE:
        raise MisalignedSliceError(
            f"theta_slice {theta_slice} lies beyond the lattice heading extent {grid.heading_extent}"
        )
    return np.abs(grid.heading_offsets()) <= round(ratio) * grid.heading_step + config.LATTICE_TOLERANCE


def _joint_cells(boundary: VptBoundary, mask: np.ndarray, require_all_headings: bool) -> np.ndarray:
    sliced = boundary.valid[:, :, mask]
    return sliced.all(axis=2) if require_all_headings else sliced.any(axis=2)


def vpt_radius(boundary: VptBoundary, theta_slice: float, require_all_headings: bool = True) -> float:
    """Square root of the valid area: ``sqrt(cells * xy_step^2)``; zero when nothing matches."""
    mask = _slice_mask(boundary.grid, theta_slice)
    count = int(_joint_cells(boundary, mask, require_all_headings).sum())
    return math.sqrt(count * boundary.grid.xy_step**2)


def vpt_contour_levels(boundary: VptBoundary, require_all_headings: bool = True) -> dict[float, np.ndarray]:
    """Jointly valid (dx, dy) masks for heading tolerances 0, step, 2*step, ..."""
    grid = boundary.grid
    half = len(grid.heading_offsets()) // 2
    levels = {}
    for k in range(half + 1):
        theta = k * grid.heading_step
        levels[theta] = _joint_cells(boundary, _slice_mask(grid, theta), require_all_headings)
    return levels


@dataclass(frozen=True, slots=True)
class VptWindow:
    start: float
    end: float
    low: float
    high: float
    median: float
    count: int

    @property
    def span(self) -> float:
        return self.high - self.low


@dataclass(frozen=True)
class VptProfile:
    arc_lengths: np.ndarray
    radii: np.ndarray
    windows: tuple[VptWindow, ...]
    boundaries: tuple[VptBoundary, ...] = field(default=(), repr=False)


def profile_windows(arc_lengths: Sequence[float], radii: Sequence[float], window: float) -> tuple[VptWindow, ...]:
    """Aggregate non-zero radii per consecutive arc-length window ``[k*w, (k+1)*w)``.

    Windows without any non-zero radius report zeros; windows without frames are skipped.
    """
    arcs = np.asarray(arc_lengths, dtype=float)
    values = np.asarray(radii, dtype=float)
    if len(arcs) == 0:
        return ()
    bins = np.floor(arcs / window + config.LATTICE_TOLERANCE).astype(int)
    windows = []
    for b in np.unique(bins):
        inside = values[bins == b]
        nonzero = inside[inside > 0.0]
        if len(nonzero):
            low, high, median = float(nonzero.min()), float(nonzero.max()), float(np.median(nonzero))
        else:
            low = high = median = 0.0
        windows.append(VptWindow(float(b * window), float((b + 1) * window), low, high, median, int(len(nonzero))))
    return tuple(windows)


def vpt_profile(
    frames: Sequence[tuple[float, FeatureFrame]],
    fmap: FeatureMap,
    vpt_cfg: VptConfig,
    icp_cfg: IcpConfig,
    threads: int = 1,
) -> VptProfile:
    """VPT radius per ``(arc_length, frame)`` location plus windowed span/median aggregates."""
    for arc, frame in frames:
        if frame.true_pose is None:
            raise ValueError(f"frame at {arc:.2f} m has no true pose")

    def evaluate(item: tuple[float, FeatureFrame]) -> VptBoundary:
        arc, frame = item
        return vpt_evaluate(frame, fmap, frame.true_pose, vpt_cfg.grid, icp_cfg, vpt_cfg.validity_tol, arc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            boundaries = list(pool.map(evaluate, frames))
    else:
        boundaries = [evaluate(item) for item in frames]
    return profile_from_boundaries(boundaries, vpt_cfg)


def profile_from_boundaries(boundaries: Sequence[VptBoundary], vpt_cfg: VptConfig) -> VptProfile:
    arcs = np.array([b.arc_length for b in boundaries], dtype=float)
    radii = np.array(
        [vpt_radius(b, vpt_cfg.theta_slice, vpt_cfg.require_all_headings) for b in boundaries], dtype=float
    )
    return VptProfile(arcs, radii, profile_windows(arcs, radii, vpt_cfg.window), tuple(boundaries))


# --- Probability of Absence of Updates ---


@dataclass(frozen=True)
class PauCurve:
    lengths: np.ndarray
    probabilities: np.ndarray
    window_stride: float
    trajectory_length: float
    window_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lengths", np.asarray(self.lengths, dtype=float))
        object.__setattr__(self, "probabilities", np.asarray(self.probabilities, dtype=float))
        if self.lengths.shape != self.probabilities.shape:
            raise ValueError("lengths and probabilities differ in size")
        if np.any(np.diff(self.lengths) <= 0):
            raise ValueError("lengths must be strictly increasing")


EventLike = Union[UpdateEvent, float]


def event_arcs(events: Sequence[EventLike]) -> np.ndarray:
    """Sorted arc lengths of accepted events; bare numbers count as accepted."""
    arcs = [
        float(e.arc_length) if isinstance(e, UpdateEvent) else float(e)
        for e in events
        if not isinstance(e, UpdateEvent) or e.accepted
    ]
    return np.sort(np.array(arcs, dtype=float))


def window_starts(trajectory_length: float, max_length: float, stride: float, wrap: bool = False) -> np.ndarray:
    """Shared window start set ``k * stride``; without wrap, ``s <= T - max_length``."""
    if stride <= 0:
        raise ValueError("stride must be positive")
    if wrap:
        count = int(math.ceil(trajectory_length / stride - config.LATTICE_TOLERANCE))
    else:
        if trajectory_length - max_length < -config.LATTICE_TOLERANCE:
            raise EmptyWindowSetError(
                f"trajectory of {trajectory_length} m is shorter than the longest window {max_length} m"
            )
        count = int(math.floor((trajectory_length - max_length) / stride + config.LATTICE_TOLERANCE)) + 1
    if count <= 0:
        raise EmptyWindowSetError("no window start points")
    return np.arange(count) * stride


def pau_curve(
    events: Sequence[EventLike],
    trajectory_length: float,
    lengths: Sequence[float],
    stride: float,
    wrap: bool = False,
) -> PauCurve:
    """P(AU_l): share of windows ``(s, s+l)`` with no accepted event strictly inside."""
    ls = np.asarray(lengths, dtype=float)
    if len(ls) == 0 or np.any(ls < 0) or np.any(np.diff(ls) <= 0):
        raise ValueError("lengths must be non-negative and strictly increasing")
    if ls[-1] > trajectory_length + config.LATTICE_TOLERANCE:
        raise EmptyWindowSetError(f"window length {ls[-1]} m exceeds trajectory length {trajectory_length} m")

    starts = window_starts(trajectory_length, float(ls[-1]), stride, wrap)
    arcs = event_arcs(events)
    if wrap:
        arcs = np.concatenate((arcs, arcs + trajectory_length))

    first = np.searchsorted(arcs, starts, side="right")
    probabilities = []
    for length in ls:
        last = np.searchsorted(arcs, starts + length, side="left")
        probabilities.append(np.count_nonzero(last <= first) / len(starts))

    curve = PauCurve(ls, np.array(probabilities), stride, trajectory_length, len(starts))
    if np.any(np.diff(curve.probabilities) > 0):
        raise AssertionError("PAU curve is not non-increasing")
    return curve


def pau_cutoff(curve: PauCurve, p: float) -> float:
    """Smallest listed length whose absence probability is at most ``p``."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    hits = np.flatnonzero(curve.probabilities <= p)
    if len(hits) == 0:
        raise CutoffNotReachedError(p)
    return float(curve.lengths[hits[0]])


def pau_area(curve: PauCurve) -> float:
    if len(curve.lengths) < 2:
        raise ValueError("area needs at least two curve points")
    return float(trapezoid(curve.probabilities, curve.lengths))


def pau_area_between(a: PauCurve, b: PauCurve) -> float:
    """``pau_area(a) - pau_area(b)``; positive when ``b`` receives updates more reliably."""
    if not np.array_equal(a.lengths, b.lengths):
        raise GridMismatchError("PAU curves use different length grids")
    return pau_area(a) - pau_area(b)


def longest_absence(events: Sequence[EventLike], trajectory_length: float) -> float:
    """Longest arc-length stretch of the trajectory without an accepted update."""
    arcs = event_arcs(events)
    arcs = arcs[(arcs >= 0.0) & (arcs <= trajectory_length)]
    edges = np.concatenate(([0.0], arcs, [trajectory_length]))
    return float(np.max(np.diff(edges)))


# --- Robustness margin ---


@dataclass(frozen=True)
class MarginReport:
    arc_lengths: np.ndarray
    vpt_radius: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    flagged: np.ndarray
    intervals: tuple[tuple[float, float], ...]

    @property
    def flagged_length(self) -> float:
        return float(sum(end - start for start, end in self.intervals))


def _last_of_duplicates(arcs: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = np.append(arcs[1:] != arcs[:-1], True)
    return arcs[keep], values[keep]


def _flagged_intervals(arcs: np.ndarray, flagged: np.ndarray) -> tuple[tuple[float, float], ...]:
    # Each sample owns the arc range up to the midpoints with its neighbours.
    edges = np.concatenate(([arcs[0]], 0.5 * (arcs[1:] + arcs[:-1]), [arcs[-1]]))
    intervals = []
    start: Optional[float] = None
    for i, flag in enumerate(flagged):
        if flag and start is None:
            start = float(edges[i])
        elif not flag and start is not None:
            intervals.append((start, float(edges[i])))
            start = None
    if start is not None:
        intervals.append((start, float(edges[-1])))
    return tuple(intervals)


def robustness_margin(
    radius_arcs: Sequence[float],
    radii: Sequence[float],
    bound_arcs: Sequence[float],
    bounds: Sequence[float],
) -> MarginReport:
    """Margin ``radius - bound`` on the VPT sample grid within the common arc range.

    Bounds are linearly interpolated onto the radius grid. Samples with margin
    ``<= 0`` are flagged and merged into intervals.
    """
    r_arcs = np.asarray(radius_arcs, dtype=float)
    r_vals = np.asarray(radii, dtype=float)
    b_arcs, b_vals = _last_of_duplicates(np.asarray(bound_arcs, dtype=float), np.asarray(bounds, dtype=float))
    if len(r_arcs) == 0 or len(b_arcs) == 0:
        raise EmptyOverlapError("margin needs non-empty radius and bound series")

    lo, hi = max(r_arcs[0], b_arcs[0]), min(r_arcs[-1], b_arcs[-1])
    inside = (r_arcs >= lo) & (r_arcs <= hi)
    if lo > hi or not inside.any():
        raise EmptyOverlapError(f"radius and bound series do not overlap ({lo:.2f} > {hi:.2f})")

    arcs = r_arcs[inside]
    radius = r_vals[inside]
    bound = np.interp(arcs, b_arcs, b_vals)
    margin = radius - bound
    flagged = margin <= 0.0
    return MarginReport(arcs, radius, bound, margin, flagged, _flagged_intervals(arcs, flagged))
