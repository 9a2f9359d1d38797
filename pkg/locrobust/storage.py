"""
Read and write operations for run artifacts: map CSV, dataset record file,
filter logs and metric tables.

Every CSV starts with a ``# locrobust <version> seed=<seed>`` comment line.
"""

import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from . import __version__, schemas
from .core import FeatureClass, FeatureFrame, FeatureMap, MapFeature, Observation, Pose2D, Trajectory, TrajectorySample
from .fusion import StateLogEntry, StrategyRun, UpdateEvent, UpdateSource
from .metrics import MarginReport, PauCurve, VptBoundary, VptProfile
from .sim import Dataset, GpsReading, OdometryIncrement

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

STATE_COLUMNS = ["t", "arc_length", "easting", "northing", "heading"] + [
    f"cov{i}{j}" for i in range(3) for j in range(3)
] + ["source_of_last_update"]
EVENT_COLUMNS = ["t", "arc_length", "source", "accepted"]
SUMMARY_COLUMNS = [
    "strategy",
    "initialised",
    "final_error",
    "mean_bound",
    "pau_cutoff",
    "pau_area",
    "flagged_length",
]

_RECORD_RANK = {"truth": 0, "odom": 1, "gps": 2, "frame": 3}


# --- CSV plumbing ---


def header_line(seed: int) -> str:
    return f"# locrobust {__version__} seed={seed}\n"


def write_csv(path: PathLike, frame: pd.DataFrame, seed: int) -> Path:
    """Write ``frame`` with the version/seed header; output bytes depend only on the data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(header_line(seed))
        frame.to_csv(handle, index=False, float_format="%.10g", lineterminator="\n")
    logger.debug("Wrote %s (%d rows)", path, len(frame))
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_seed(path: PathLike) -> Optional[int]:
    """Seed recorded in a CSV header or the meta record of a dataset file."""
    with open(path, encoding="utf-8") as handle:
        first = handle.readline().strip()
    if first.startswith("#") and "seed=" in first:
        return int(first.rsplit("seed=", 1)[1])
    if first.startswith("{"):
        return json.loads(first).get("seed")
    return None


# --- Map ---


def map_frame(fmap: FeatureMap) -> pd.DataFrame:
    rows = [(f.id, f.cls.value, f.easting, f.northing) for f in fmap]
    return pd.DataFrame(rows, columns=["id", "class", "easting", "northing"])


def write_map(path: PathLike, fmap: FeatureMap, seed: int) -> Path:
    return write_csv(path, map_frame(fmap), seed)


def read_map(path: PathLike) -> FeatureMap:
    df = read_csv(path)
    return FeatureMap(
        MapFeature(int(row.id), FeatureClass(row["class"]), float(row.easting), float(row.northing))
        for _, row in df.iterrows()
    )


# --- Dataset record file ---


def _pose_record(pose: Pose2D) -> schemas.PoseRecord:
    return schemas.PoseRecord(easting=pose.easting, northing=pose.northing, heading=pose.heading)


def dataset_records(dataset: Dataset, world: str = "") -> List[schemas.Record]:
    """Meta record followed by every stream event in time order (truth < odom < gps < frame on ties)."""
    events = []
    for s in dataset.ground_truth.samples:
        events.append(
            schemas.TruthRecord(
                t=s.t, easting=s.pose.easting, northing=s.pose.northing, heading=s.pose.heading, arc_length=s.arc_length
            )
        )
    events += [schemas.OdomRecord(t=o.t, distance=o.distance, dheading=o.dheading) for o in dataset.odometry]
    events += [
        schemas.GpsRecord(t=g.t, easting=g.easting, northing=g.northing, sigma=g.sigma) for g in dataset.gps_readings
    ]
    for f in dataset.feature_frames:
        events.append(
            schemas.FrameRecord(
                t=f.timestamp,
                observations=[schemas.ObservationRecord(cls=o.cls.value, x=o.x, y=o.y) for o in f.observations],
                true_pose=_pose_record(f.true_pose) if f.true_pose is not None else None,
            )
        )
    events.sort(key=lambda r: (r.t, _RECORD_RANK[r.type]))
    meta = schemas.MetaRecord(version=__version__, seed=dataset.seed, speed=dataset.speed, world=world)
    return [meta, *events]


def write_dataset(path: PathLike, dataset: Dataset, world: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in dataset_records(dataset, world):
            handle.write(record.model_dump_json())
            handle.write("\n")
    logger.debug("Wrote dataset %s", path)
    return path


def records_to_dataset(records: Iterable[schemas.Record]) -> Dataset:
    meta: Optional[schemas.MetaRecord] = None
    truth, odometry, readings, frames = [], [], [], []
    for record in records:
        if isinstance(record, schemas.MetaRecord):
            meta = record
        elif isinstance(record, schemas.TruthRecord):
            pose = Pose2D(record.easting, record.northing, record.heading)
            truth.append(TrajectorySample(record.t, pose, record.arc_length))
        elif isinstance(record, schemas.OdomRecord):
            odometry.append(OdometryIncrement(record.t, record.distance, record.dheading))
        elif isinstance(record, schemas.GpsRecord):
            readings.append(GpsReading(record.t, record.easting, record.northing, record.sigma))
        elif isinstance(record, schemas.FrameRecord):
            observations = tuple(Observation(FeatureClass(o.cls), o.x, o.y) for o in record.observations)
            true_pose = record.true_pose
            pose = Pose2D(true_pose.easting, true_pose.northing, true_pose.heading) if true_pose else None
            frames.append(FeatureFrame(record.t, observations, pose))
    return Dataset(
        Trajectory(tuple(truth)),
        tuple(odometry),
        tuple(readings),
        tuple(frames),
        seed=meta.seed if meta else 0,
        speed=meta.speed if meta else 0.0,
    )


def read_dataset(path: PathLike) -> Dataset:
    with open(path, encoding="utf-8") as handle:
        records = [schemas.RecordAdapter.validate_json(line) for line in handle if line.strip()]
    return records_to_dataset(records)


# --- Filter logs ---


def state_log_frame(states: Sequence[StateLogEntry]) -> pd.DataFrame:
    rows = []
    for entry in states:
        pose = entry.state.pose
        rows.append(
            [entry.t, entry.arc_length, pose.easting, pose.northing, pose.heading]
            + [float(v) for v in entry.state.covariance.ravel()]
            + [entry.last_update]
        )
    return pd.DataFrame(rows, columns=STATE_COLUMNS)


def event_frame(events: Sequence[UpdateEvent]) -> pd.DataFrame:
    rows = [(e.timestamp, e.arc_length, e.source.value, int(e.accepted)) for e in events]
    return pd.DataFrame(rows, columns=EVENT_COLUMNS)


def write_strategy_run(directory: PathLike, run: StrategyRun, seed: int) -> tuple[Path, Path]:
    directory = Path(directory)
    name = run.strategy.mode.value
    states = write_csv(directory / f"states_{name}.csv", state_log_frame(run.states), seed)
    events = write_csv(directory / f"events_{name}.csv", event_frame(run.events), seed)
    return states, events


def read_events(path: PathLike) -> List[UpdateEvent]:
    df = read_csv(path)
    return [
        UpdateEvent(float(row.t), float(row.arc_length), UpdateSource(row.source), bool(int(row.accepted)))
        for row in df.itertuples(index=False)
    ]


def read_state_log(path: PathLike) -> pd.DataFrame:
    return read_csv(path)


# --- Metric tables ---


def vpt_lattice_frame(boundaries: Sequence[VptBoundary]) -> pd.DataFrame:
    rows = [
        (b.arc_length, dx, dy, dth, int(valid)) for b in boundaries for dx, dy, dth, valid in b.cells()
    ]
    return pd.DataFrame(rows, columns=["arc_length", "dx", "dy", "dtheta", "valid"])


def vpt_profile_frame(profile: VptProfile) -> pd.DataFrame:
    return pd.DataFrame({"arc_length": profile.arc_lengths, "radius": profile.radii})


def vpt_window_frame(profile: VptProfile) -> pd.DataFrame:
    rows = [(w.start, w.end, w.low, w.high, w.median, w.count) for w in profile.windows]
    return pd.DataFrame(rows, columns=["start", "end", "low", "high", "median", "count"])


def pau_frame(curve: PauCurve) -> pd.DataFrame:
    return pd.DataFrame({"l": curve.lengths, "probability": curve.probabilities})


def margin_frame(report: MarginReport) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "arc_length": report.arc_lengths,
            "vpt_radius": report.vpt_radius,
            "bound": report.bound,
            "margin": report.margin,
            "flagged": report.flagged.astype(int),
        }
    )


def read_pau(path: PathLike, stride: float = 0.0, trajectory_length: float = 0.0) -> PauCurve:
    df = read_csv(path)
    return PauCurve(df["l"].to_numpy(float), df["probability"].to_numpy(float), stride, trajectory_length)


def read_profile(path: PathLike) -> tuple[np.ndarray, np.ndarray]:
    df = read_csv(path)
    return df["arc_length"].to_numpy(float), df["radius"].to_numpy(float)


def summary_frame(rows: Sequence[dict]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=SUMMARY_COLUMNS)
