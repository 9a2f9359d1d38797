"""
Unscented Kalman filter over (easting, northing, heading) with dead-reckoning
prediction and gated global-pose updates from GPS and/or ICP map matching.

The four localisation strategies (dead-reckoning, GPS, pole, pole+corner) are
configurations of ``run_strategy``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from filterpy.kalman import MerweScaledSigmaPoints, unscented_transform

from . import config
from .core import FeatureClass, FeatureMap, Pose2D, motion_model, wrap_angle
from .errors import CovarianceError, InitialisationError, SingularInnovationError
from .matcher import icp_match
from .schemas import IcpConfig, NoiseConfig, StrategyConfig, StrategyMode, UkfParams
from .sim import Dataset, GpsReading

logger = logging.getLogger(__name__)

Z95 = 1.96


@dataclass(frozen=True)
class FilterState:
    pose: Pose2D
    covariance: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float).reshape(3, 3)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    @property
    def mean(self) -> np.ndarray:
        return self.pose.as_array()

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))


class UpdateSource(str, Enum):
    GPS = "gps"
    ICP = "icp"


@dataclass(frozen=True, slots=True)
class UpdateEvent:
    timestamp: float
    arc_length: float
    source: UpdateSource
    accepted: bool


@dataclass(frozen=True, slots=True)
class StateLogEntry:
    t: float
    arc_length: float
    state: FilterState
    last_update: str


@dataclass
class StrategyRun:
    strategy: StrategyConfig
    states: list[StateLogEntry] = field(default_factory=list)
    events: list[UpdateEvent] = field(default_factory=list)
    initialised_at: Optional[float] = None
    icp_initialised_at: Optional[float] = None

    @property
    def accepted_events(self) -> list[UpdateEvent]:
        return [e for e in self.events if e.accepted]

    @property
    def final_state(self) -> FilterState:
        return self.states[-1].state


# --- Sigma point helpers ---


def pose_residual(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.subtract(a, b)
    y[2] = wrap_angle(float(y[2]))
    return y


def pose_mean(sigmas: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean with the heading averaged as unit vectors."""
    mean = np.empty(3)
    mean[:2] = weights @ sigmas[:, :2]
    mean[2] = math.atan2(float(weights @ np.sin(sigmas[:, 2])), float(weights @ np.cos(sigmas[:, 2])))
    return mean


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Matrix square root ``U`` with ``U.T @ U == matrix`` for singular PSD input."""
    w, v = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))).T


def _points(params: UkfParams) -> MerweScaledSigmaPoints:
    return MerweScaledSigmaPoints(
        3, alpha=params.alpha, beta=params.beta, kappa=params.kappa, sqrt_method=psd_sqrt, subtract=pose_residual
    )


def check_psd(matrix: np.ndarray, name: str = "covariance") -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
        raise CovarianceError(f"{name} must be a finite 3x3 matrix")
    if not np.allclose(matrix, matrix.T, atol=1e-9, rtol=1e-9):
        raise CovarianceError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(matrix).min() < -config.PSD_TOLERANCE:
        raise CovarianceError(f"{name} is not positive semi-definite")


def _symmetrise(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def process_noise(heading: float, distance: float, dheading: float, noise: NoiseConfig) -> np.ndarray:
    """Odometry noise mapped to state space; variances grow linearly with distance."""
    travelled = abs(distance)
    control = np.diag(
        [noise.odometry_distance_sigma**2 * travelled, noise.odometry_heading_sigma**2 * travelled]
    )
    mid = heading + 0.5 * dheading
    jac = np.array(
        [
            [math.cos(mid), -0.5 * distance * math.sin(mid)],
            [math.sin(mid), 0.5 * distance * math.cos(mid)],
            [0.0, 1.0],
        ]
    )
    return jac @ control @ jac.T


# --- Filter operations ---


def predict(
    state: FilterState,
    odom: tuple[float, float],
    noise: NoiseConfig,
    params: UkfParams = UkfParams(),
    timestamp: Optional[float] = None,
) -> FilterState:
    """Propagate sigma points through the midpoint odometry model."""
    check_psd(state.covariance)
    timestamp = state.timestamp if timestamp is None else timestamp
    if timestamp < state.timestamp:
        raise ValueError("odometry timestamp precedes the filter state")
    distance, dheading = odom

    points = _points(params)
    sigmas = points.sigma_points(state.mean, state.covariance)
    moved = motion_model(sigmas, distance, dheading)
    q = process_noise(state.pose.heading, distance, dheading, noise)
    mean, cov = unscented_transform(
        moved, points.Wm, points.Wc, q, mean_fn=pose_mean, residual_fn=pose_residual
    )
    return FilterState(Pose2D.from_array(mean), _symmetrise(cov), timestamp)


def pose_innovation(state: FilterState, obs: Pose2D) -> np.ndarray:
    return pose_residual(obs.as_array(), state.mean)


def update_pose(
    state: FilterState,
    obs: Pose2D,
    obs_cov: np.ndarray,
    gate: float,
    params: UkfParams = UkfParams(),
) -> tuple[FilterState, bool]:
    """UKF update with a direct global pose observation and chi-square gating.

    Returns the (possibly unchanged) state and whether the observation was accepted.
    Raises ``SingularInnovationError`` when the innovation covariance is singular.
    """
    check_psd(obs_cov, "observation covariance")
    points = _points(params)
    sigmas = points.sigma_points(state.mean, state.covariance)
    z_mean, s_cov = unscented_transform(
        sigmas, points.Wm, points.Wc, np.asarray(obs_cov, dtype=float), mean_fn=pose_mean, residual_fn=pose_residual
    )
    cross = np.zeros((3, 3))
    for weight, sigma in zip(points.Wc, sigmas):
        cross += weight * np.outer(pose_residual(sigma, state.mean), pose_residual(sigma, z_mean))

    s_cov = _symmetrise(s_cov)
    try:
        np.linalg.cholesky(s_cov)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc
    if np.linalg.cond(s_cov) > 1e15:
        raise SingularInnovationError("innovation covariance is singular")

    innovation = pose_residual(obs.as_array(), z_mean)
    distance = float(innovation @ np.linalg.solve(s_cov, innovation))
    if distance > gate:
        return state, False

    gain = np.linalg.solve(s_cov.T, cross.T).T
    mean = state.mean + gain @ innovation
    cov = _symmetrise(state.covariance - gain @ s_cov @ gain.T)
    check_psd(cov, "posterior covariance")
    return FilterState(Pose2D.from_array(mean), cov, state.timestamp), True


# --- GPS initialisation ---


def gps_heading(readings: Sequence[GpsReading], speed_threshold: float) -> Optional[tuple[float, float]]:
    """Heading and baseline of the latest consecutive fix pair moving above the threshold."""
    for prev, cur in zip(reversed(readings[:-1]), reversed(readings[1:])):
        dt = cur.t - prev.t
        de, dn = cur.easting - prev.easting, cur.northing - prev.northing
        baseline = math.hypot(de, dn)
        if dt > 0 and baseline / dt > speed_threshold:
            return math.atan2(dn, de), baseline
    return None


def gps_initialise(readings: Sequence[GpsReading], speed_threshold: float) -> Optional[Pose2D]:
    """Pose from the latest fix with heading from GPS motion; ``None`` when not ready."""
    if len(readings) < 2:
        return None
    heading = gps_heading(readings, speed_threshold)
    if heading is None:
        return None
    latest = readings[-1]
    return Pose2D(latest.easting, latest.northing, heading[0])


def _gps_observation(
    readings: Sequence[GpsReading], noise: NoiseConfig, speed_threshold: float, state: FilterState
) -> tuple[Pose2D, np.ndarray]:
    latest = readings[-1]
    heading = gps_heading(readings[-2:], speed_threshold) if len(readings) >= 2 else None
    if heading is None:
        # Position-only fix: heading observed at the prior mean with an uninformative sigma.
        theta, heading_sigma = state.pose.heading, noise.gps_heading_sigma_max
    else:
        theta = heading[0]
        heading_sigma = min(math.sqrt(2.0) * noise.gps_sigma / heading[1], noise.gps_heading_sigma_max)
    cov = np.diag([noise.gps_sigma**2, noise.gps_sigma**2, heading_sigma**2])
    return Pose2D(latest.easting, latest.northing, theta), cov


def _initial_covariance(readings: Sequence[GpsReading], noise: NoiseConfig, speed_threshold: float) -> np.ndarray:
    _, baseline = gps_heading(readings, speed_threshold)
    heading_sigma = min(math.sqrt(2.0) * noise.gps_sigma / baseline, noise.gps_heading_sigma_max)
    return np.diag([noise.gps_sigma**2, noise.gps_sigma**2, heading_sigma**2])


def icp_covariance(noise: NoiseConfig) -> np.ndarray:
    return np.diag([noise.icp_position_sigma**2, noise.icp_position_sigma**2, noise.icp_heading_sigma**2])


# --- Strategy replay ---

_ODOM, _GPS, _FRAME = 0, 1, 2


def _timeline(dataset: Dataset) -> list[tuple[float, int, int]]:
    items = [(o.t, _ODOM, i) for i, o in enumerate(dataset.odometry)]
    items += [(g.t, _GPS, i) for i, g in enumerate(dataset.gps_readings)]
    items += [(f.timestamp, _FRAME, i) for i, f in enumerate(dataset.feature_frames)]
    items.sort()
    return items


def run_strategy(
    dataset: Dataset,
    fmap: FeatureMap,
    strategy: StrategyConfig,
    icp_cfg: IcpConfig,
) -> StrategyRun:
    """Replay a dataset through the UKF configured as one localisation strategy."""
    run = StrategyRun(strategy)
    noise = strategy.noise
    classes = [FeatureClass(c) for c in strategy.feature_classes]
    match_map = fmap.restrict(classes) if strategy.uses_icp else fmap
    obs_icp = icp_covariance(noise)

    state: Optional[FilterState] = None
    arc = 0.0
    history: list[GpsReading] = []
    icp_active = False
    last_update = "none"

    def apply(obs: Pose2D, cov: np.ndarray, source: UpdateSource, t: float) -> bool:
        nonlocal state, last_update
        try:
            state, accepted = update_pose(state, obs, cov, strategy.gate_threshold, strategy.ukf)
        except SingularInnovationError:
            logger.warning("%s: singular innovation for %s update at t=%.2f", strategy.mode.label, source.value, t)
            accepted = False
        run.events.append(UpdateEvent(t, arc, source, accepted))
        if accepted:
            state = FilterState(state.pose, state.covariance, t)
            last_update = source.value
            run.states.append(StateLogEntry(t, arc, state, last_update))
        return accepted

    for t, kind, index in _timeline(dataset):
        if kind == _ODOM:
            odom = dataset.odometry[index]
            arc += abs(odom.distance)
            if state is None:
                continue
            state = predict(state, (odom.distance, odom.dheading), noise, strategy.ukf, t)
            run.states.append(StateLogEntry(t, arc, state, last_update))

        elif kind == _GPS:
            history.append(dataset.gps_readings[index])
            if state is None:
                pose = gps_initialise(history, strategy.gps_speed_threshold)
                if pose is not None:
                    cov = _initial_covariance(history, noise, strategy.gps_speed_threshold)
                    state = FilterState(pose, cov, t)
                    last_update = "init"
                    run.initialised_at = arc
                    run.states.append(StateLogEntry(t, arc, state, last_update))
                    logger.info("%s: initialised from GPS at t=%.2f (%.1f m)", strategy.mode.label, t, arc)
                continue
            if strategy.mode == StrategyMode.DEAD_RECKONING:
                continue
            if strategy.mode == StrategyMode.GPS or not icp_active or strategy.gps_used_after_init:
                obs, cov = _gps_observation(history, noise, strategy.gps_speed_threshold, state)
                apply(obs, cov, UpdateSource.GPS, t)

        elif kind == _FRAME and strategy.uses_icp and state is not None:
            frame = dataset.feature_frames[index].restrict(classes)
            result = icp_match(state.pose, frame, match_map, icp_cfg)
            if not result.converged:
                continue
            if apply(result.pose, obs_icp, UpdateSource.ICP, t) and not icp_active:
                icp_active = True
                run.icp_initialised_at = arc
                logger.info("%s: map matching initialised at t=%.2f (%.1f m)", strategy.mode.label, t, arc)

    if state is None:
        raise InitialisationError(f"{strategy.mode.label}: GPS never produced a qualifying fix pair")
    return run


def confidence_bound(states: Sequence[StateLogEntry]) -> np.ndarray:
    """Per-sample 95 % bounds ``(easting, northing, heading)`` = 1.96 sigma per axis."""
    if not states:
        return np.empty((0, 3))
    diag = np.array([np.diag(entry.state.covariance) for entry in states])
    return Z95 * np.sqrt(np.clip(diag, 0.0, None))


def position_bound(states: Sequence[StateLogEntry]) -> np.ndarray:
    """Larger of the easting and northing 95 % bounds per sample."""
    bounds = confidence_bound(states)
    return bounds[:, :2].max(axis=1) if len(bounds) else np.empty(0)
