"""
Pydantic schemas for configuration, run manifests and the dataset record file.
"""

import math
from enum import Enum
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator
from scipy.stats import chi2

# 3-DoF chi-square gate at 99.7 %, ~13.93.
DEFAULT_GATE = float(chi2.ppf(0.997, 3))


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# --- World & Sensor Schemas ---


class RouteSpec(_Frozen):
    waypoints: List[Tuple[float, float]] = Field(..., min_length=2)
    closed: bool = False

    def polyline(self) -> np.ndarray:
        pts = np.array(self.waypoints, dtype=float)
        if self.closed and not np.array_equal(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        return pts

    @property
    def length(self) -> float:
        pts = self.polyline()
        return float(np.hypot(*np.diff(pts, axis=0).T).sum())


class ZoneSpec(_Frozen):
    start: float = Field(..., ge=0.0)
    end: float = Field(..., ge=0.0)
    pole_density: float = Field(0.0, ge=0.0, description="poles per 100 m of route")
    corner_density: float = Field(0.0, ge=0.0, description="corners per 100 m of route")
    name: str = ""

    @model_validator(mode="after")
    def _ordered(self):
        if self.end < self.start:
            raise ValueError(f"zone end {self.end} precedes start {self.start}")
        return self


class WorldSpec(_Frozen):
    name: str = "world"
    route: RouteSpec
    zones: List[ZoneSpec] = Field(default_factory=list)
    gps_dropout_zones: List[Tuple[float, float]] = Field(default_factory=list)
    lateral_offset: Tuple[float, float] = (2.0, 15.0)
    route_spacing: float = Field(0.5, gt=0.0, description="route sample spacing in m")
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _intervals_on_route(self):
        length = self.route.length
        # Allow for rounding in preset geometry.
        slack = 1e-6 * max(1.0, length)
        for zone in self.zones:
            if zone.end > length + slack:
                raise ValueError(f"zone [{zone.start}, {zone.end}] exceeds route length {length:.3f}")
        for start, end in self.gps_dropout_zones:
            if not 0.0 <= start <= end <= length + slack:
                raise ValueError(f"gps dropout [{start}, {end}] outside [0, {length:.3f}]")
        low, high = self.lateral_offset
        if not 0.0 <= low <= high:
            raise ValueError("lateral_offset must satisfy 0 <= low <= high")
        return self


class LidarSpec(_Frozen):
    max_range: float = Field(20.0, gt=0.0)
    min_range: float = Field(1.0, ge=0.0)
    fov: float = Field(2.0 * math.pi, gt=0.0, le=2.0 * math.pi)
    detection_probability: float = Field(1.0, ge=0.0, le=1.0)
    sigma: float = Field(0.05, ge=0.0)
    clutter_rate: float = Field(0.0, ge=0.0, description="mean clutter points per frame")
    period: float = Field(0.1, gt=0.0)


class GpsSpec(_Frozen):
    sigma: float = Field(2.0, ge=0.0)
    period: float = Field(1.0, gt=0.0)
    speed_threshold: float = Field(0.5, ge=0.0)


class OdometrySpec(_Frozen):
    velocity_sigma: float = Field(0.05, ge=0.0, description="m/s")
    yaw_rate_sigma: float = Field(0.005, ge=0.0, description="rad/s")
    yaw_rate_bias: float = Field(0.001, description="rad/s, constant per run")
    period: float = Field(0.1, gt=0.0)


class SensorSpec(_Frozen):
    lidar: LidarSpec = Field(default_factory=LidarSpec)
    gps: GpsSpec = Field(default_factory=GpsSpec)
    odometry: OdometrySpec = Field(default_factory=OdometrySpec)

    def noise_free(self) -> "SensorSpec":
        """Copy with every noise source disabled and perfect detection."""
        return SensorSpec(
            lidar=self.lidar.model_copy(update={"sigma": 0.0, "clutter_rate": 0.0, "detection_probability": 1.0}),
            gps=self.gps.model_copy(update={"sigma": 0.0}),
            odometry=self.odometry.model_copy(
                update={"velocity_sigma": 0.0, "yaw_rate_sigma": 0.0, "yaw_rate_bias": 0.0}
            ),
        )


# --- Matching & Filtering Schemas ---


class IcpConfig(_Frozen):
    correspondence_gate: float = Field(3.0, gt=0.0)
    max_iterations: int = Field(50, ge=1)
    convergence_tol: Tuple[float, float] = (1e-4, 1e-5)
    min_inliers: int = Field(3, ge=2)
    max_rms: float = Field(0.5, ge=0.0)


class StrategyMode(str, Enum):
    DEAD_RECKONING = "dead_reckoning"
    GPS = "gps"
    POLE = "pole"
    POLE_CORNER = "pole_corner"

    @property
    def label(self) -> str:
        return {
            "dead_reckoning": "DeadReckoning",
            "gps": "Gps",
            "pole": "Pole",
            "pole_corner": "PoleCorner",
        }[self.value]


class NoiseConfig(_Frozen):
    odometry_distance_sigma: float = Field(0.02, ge=0.0, description="m per sqrt(m) travelled")
    odometry_heading_sigma: float = Field(0.003, ge=0.0, description="rad per sqrt(m) travelled")
    gps_sigma: float = Field(2.0, ge=0.0)
    icp_position_sigma: float = Field(0.1, ge=0.0)
    icp_heading_sigma: float = Field(0.01, ge=0.0)
    # Heading sigma used when a GPS fix has no qualifying predecessor.
    gps_heading_sigma_max: float = Field(math.pi, gt=0.0)


class UkfParams(_Frozen):
    alpha: float = Field(0.1, gt=0.0)
    beta: float = 2.0
    kappa: float = 0.0


class StrategyConfig(_Frozen):
    mode: StrategyMode
    gps_used_after_init: Optional[bool] = None
    gate_threshold: float = Field(DEFAULT_GATE, gt=0.0)
    gps_speed_threshold: float = Field(0.5, ge=0.0, description="min implied speed for a GPS heading")
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    ukf: UkfParams = Field(default_factory=UkfParams)

    @model_validator(mode="before")
    @classmethod
    def _default_gps_usage(cls, data):
        if isinstance(data, dict) and data.get("gps_used_after_init") is None and "mode" in data:
            data = {**data, "gps_used_after_init": StrategyMode(data["mode"]) == StrategyMode.GPS}
        return data

    @property
    def uses_icp(self) -> bool:
        return self.mode in (StrategyMode.POLE, StrategyMode.POLE_CORNER)

    @property
    def feature_classes(self) -> Tuple[str, ...]:
        if self.mode == StrategyMode.POLE:
            return ("pole",)
        if self.mode == StrategyMode.POLE_CORNER:
            return ("pole", "corner")
        return ()


# --- Metric Schemas ---


class VptGridSpec(_Frozen):
    xy_step: float = Field(1.0, gt=0.0)
    xy_extent: float = Field(5.0, gt=0.0)
    heading_step: float = Field(0.1, gt=0.0)
    heading_extent: float = Field(0.1, gt=0.0)

    @model_validator(mode="after")
    def _extents_cover_steps(self):
        if self.xy_extent < self.xy_step or self.heading_extent < self.heading_step:
            raise ValueError("grid extents must be at least one step")
        return self

    def _half_count(self, extent: float, step: float) -> int:
        return int(math.floor(extent / step + 1e-9))

    def xy_offsets(self) -> np.ndarray:
        k = self._half_count(self.xy_extent, self.xy_step)
        return np.arange(-k, k + 1) * self.xy_step

    def heading_offsets(self) -> np.ndarray:
        k = self._half_count(self.heading_extent, self.heading_step)
        return np.arange(-k, k + 1) * self.heading_step

    @property
    def shape(self) -> Tuple[int, int, int]:
        nxy = len(self.xy_offsets())
        return (nxy, nxy, len(self.heading_offsets()))


class VptConfig(_Frozen):
    grid: VptGridSpec = Field(default_factory=VptGridSpec)
    theta_slice: float = Field(0.1, ge=0.0)
    validity_tol: Tuple[float, float] = (0.5, 0.05)
    window: float = Field(6.0, gt=0.0)
    spacing: float = Field(2.0, gt=0.0, description="arc length between evaluated frames")
    require_all_headings: bool = True
    contour_locations: List[float] = Field(default_factory=list)


class PauConfig(_Frozen):
    stride: float = Field(0.5, gt=0.0)
    lengths: List[float] = Field(default_factory=lambda: [0.5 * k for k in range(1, 61)])
    cutoff: float = Field(0.05, gt=0.0, lt=1.0)
    wrap: bool = False


class MetricsConfig(_Frozen):
    vpt: VptConfig = Field(default_factory=VptConfig)
    pau: PauConfig = Field(default_factory=PauConfig)
    margin_strategies: List[StrategyMode] = Field(
        default_factory=lambda: [StrategyMode.GPS, StrategyMode.POLE_CORNER, StrategyMode.DEAD_RECKONING]
    )


class RunManifest(_Frozen):
    name: str = "run"
    world: str = Field(..., description="path to a WorldSpec JSON file or preset:<name>")
    sensors: str = Field("preset:default", description="path to a SensorSpec JSON file or preset:<name>")
    strategies: List[StrategyMode] = Field(default_factory=lambda: list(StrategyMode))
    speed: float = Field(5.0, gt=0.0)
    laps: int = Field(1, ge=1, description="traversals of the route in its own direction")
    reverse: bool = Field(False, description="follow the laps with as many in the opposite direction")
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    icp: IcpConfig = Field(default_factory=IcpConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    output_dir: Optional[str] = None


# --- Dataset Record Schemas ---


class PoseRecord(_Frozen):
    easting: float
    northing: float
    heading: float


class ObservationRecord(_Frozen):
    cls: Literal["pole", "corner"]
    x: float
    y: float


class MetaRecord(_Frozen):
    type: Literal["meta"] = "meta"
    version: str
    seed: int
    speed: float
    world: str = ""


class TruthRecord(_Frozen):
    type: Literal["truth"] = "truth"
    t: float
    easting: float
    northing: float
    heading: float
    arc_length: float


class OdomRecord(_Frozen):
    type: Literal["odom"] = "odom"
    t: float
    distance: float
    dheading: float


class GpsRecord(_Frozen):
    type: Literal["gps"] = "gps"
    t: float
    easting: float
    northing: float
    sigma: float


class FrameRecord(_Frozen):
    type: Literal["frame"] = "frame"
    t: float
    observations: List[ObservationRecord] = Field(default_factory=list)
    true_pose: Optional[PoseRecord] = None


Record = Annotated[
    Union[MetaRecord, TruthRecord, OdomRecord, GpsRecord, FrameRecord],
    Field(discriminator="type"),
]
RecordAdapter: TypeAdapter = TypeAdapter(Record)
