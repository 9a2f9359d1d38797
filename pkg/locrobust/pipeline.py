"""
Pipeline stages shared by the CLI and the Celery worker.

Each stage reads its inputs from and writes its artifacts to one output
directory, so stages can be run separately and repeated byte-identically.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from . import config, plots, storage
from .core import FeatureFrame, FeatureMap
from .errors import CutoffNotReachedError, EmptyOverlapError, InitialisationError, ManifestError
from .fusion import StrategyRun, position_bound, run_strategy
from .metrics import (
    MarginReport,
    PauCurve,
    VptBoundary,
    VptProfile,
    pau_area,
    pau_curve,
    pau_cutoff,
    profile_from_boundaries,
    robustness_margin,
    vpt_evaluate,
    vpt_profile,
)
from .schemas import RunManifest, SensorSpec, StrategyConfig, StrategyMode, WorldSpec
from .sim import SENSOR_PRESETS, WORLD_PRESETS, Dataset, generate_world, simulate_run, world_summary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAP_FILE = "map.csv"
DATASET_FILE = "dataset.jsonl"
LOCALISATION_FILE = "localisation.csv"
SUMMARY_FILE = "summary.csv"


# --- Manifest handling ---


def load_manifest(path: PathLike) -> RunManifest:
    """Parse and validate a manifest; referenced spec files must exist."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    manifest = RunManifest.model_validate(data)
    # Fail early on missing files rather than mid-pipeline.
    resolve_world(manifest.world, path.parent)
    resolve_sensors(manifest.sensors, path.parent)
    return manifest.model_copy(update={"world": _absolute(manifest.world, path.parent),
                                       "sensors": _absolute(manifest.sensors, path.parent)})


def _absolute(ref: str, base: Path) -> str:
    if ref.startswith("preset:"):
        return ref
    candidate = Path(ref)
    return str(candidate if candidate.is_absolute() else (base / candidate))


def _read_reference(ref: str, base: Path, presets: dict, kind: str):
    if ref.startswith("preset:"):
        name = ref.split(":", 1)[1]
        if name not in presets:
            raise ManifestError(f"unknown {kind} preset {name!r}; choose from {sorted(presets)}")
        return presets[name]()
    path = Path(ref)
    path = path if path.is_absolute() else base / path
    if not path.is_file():
        raise ManifestError(f"{kind} spec not found: {path}")
    return path.read_text(encoding="utf-8")


def resolve_world(ref: str, base: PathLike = ".") -> WorldSpec:
    value = _read_reference(ref, Path(base), WORLD_PRESETS, "world")
    return value if isinstance(value, WorldSpec) else WorldSpec.model_validate_json(value)


def resolve_sensors(ref: str, base: PathLike = ".") -> SensorSpec:
    value = _read_reference(ref, Path(base), SENSOR_PRESETS, "sensor")
    return value if isinstance(value, SensorSpec) else SensorSpec.model_validate_json(value)


def effective_seed(manifest: RunManifest, override: Optional[int] = None) -> int:
    if override is not None:
        return override
    return manifest.seed if manifest.seed is not None else config.DEFAULT_SEED


def output_dir(manifest: RunManifest, override: Optional[PathLike] = None) -> Path:
    if override is not None:
        return Path(override)
    if manifest.output_dir:
        return Path(manifest.output_dir)
    return Path(config.OUTPUT_DIR) / manifest.name


def strategy_config(manifest: RunManifest, mode: StrategyMode) -> StrategyConfig:
    return StrategyConfig(mode=mode, noise=manifest.noise)


def fan_out(fn: Callable, items: Sequence, threads: int) -> list:
    """Apply ``fn`` to every item; results come back in submission order."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# --- Simulate ---


@dataclass
class SimulationResult:
    world: WorldSpec
    fmap: FeatureMap
    dataset: Dataset
    summary: dict = field(default_factory=dict)
    paths: List[Path] = field(default_factory=list)


def stage_simulate(manifest: RunManifest, out: PathLike, seed: int) -> SimulationResult:
    world = resolve_world(manifest.world)
    sensors = resolve_sensors(manifest.sensors)
    fmap, route = generate_world(world)
    try:
        dataset = simulate_run(
            fmap, route, sensors, manifest.speed, seed, world.gps_dropout_zones, manifest.laps, manifest.reverse
        )
    except ValueError as exc:
        raise ManifestError(f"cannot drive world {world.name!r}: {exc}") from exc
    out = Path(out)
    paths = [
        storage.write_map(out / MAP_FILE, fmap, seed),
        storage.write_dataset(out / DATASET_FILE, dataset, world.name),
    ]
    return SimulationResult(world, fmap, dataset, world_summary(fmap, route), paths)


def load_inputs(out: PathLike) -> tuple[FeatureMap, Dataset]:
    out = Path(out)
    for name in (MAP_FILE, DATASET_FILE):
        if not (out / name).is_file():
            raise ManifestError(f"{out / name} is missing; run 'simulate' first")
    return storage.read_map(out / MAP_FILE), storage.read_dataset(out / DATASET_FILE)


# --- Localise ---


@dataclass
class LocalisationOutcome:
    mode: StrategyMode
    run: Optional[StrategyRun] = None
    error: Optional[str] = None
    initialised: float = math.nan
    final_error: float = math.nan
    mean_bound: float = math.nan

    @property
    def ok(self) -> bool:
        return self.error is None

    def row(self) -> dict:
        return {
            "strategy": self.mode.label,
            "initialised": self.initialised,
            "final_error": self.final_error,
            "mean_bound": self.mean_bound,
        }


def final_pose_error(run: StrategyRun, dataset: Dataset) -> float:
    if not dataset.has_truth:
        return math.nan
    last = run.states[-1]
    truth = dataset.ground_truth
    times = truth.times()
    e = np.interp(last.t, times, truth.positions()[:, 0])
    n = np.interp(last.t, times, truth.positions()[:, 1])
    return float(math.hypot(last.state.pose.easting - e, last.state.pose.northing - n))


def localise_one(dataset: Dataset, fmap: FeatureMap, manifest: RunManifest, mode: StrategyMode) -> LocalisationOutcome:
    """Run one strategy; initialisation failure is reported, not raised."""
    try:
        run = run_strategy(dataset, fmap, strategy_config(manifest, mode), manifest.icp)
    except InitialisationError as exc:
        logger.error("%s failed to initialise: %s", mode.label, exc)
        return LocalisationOutcome(mode, error=str(exc))
    bounds = position_bound(run.states)
    return LocalisationOutcome(
        mode,
        run=run,
        initialised=run.initialised_at,
        final_error=final_pose_error(run, dataset),
        mean_bound=float(np.mean(bounds)) if len(bounds) else math.nan,
    )


def write_outcome(out: PathLike, outcome: LocalisationOutcome, seed: int) -> List[Path]:
    if outcome.run is None:
        return []
    return list(storage.write_strategy_run(out, outcome.run, seed))


def stage_localise(
    manifest: RunManifest,
    out: PathLike,
    seed: int,
    threads: int = 1,
    runner: Optional[Callable[[StrategyMode], LocalisationOutcome]] = None,
) -> List[LocalisationOutcome]:
    """Run every manifest strategy and write one state log and event log per strategy."""
    if runner is None:
        fmap, dataset = load_inputs(out)

        def run_and_write(mode: StrategyMode) -> LocalisationOutcome:
            outcome = localise_one(dataset, fmap, manifest, mode)
            write_outcome(out, outcome, seed)
            return outcome

        runner = run_and_write

    outcomes = fan_out(runner, list(manifest.strategies), threads)
    storage.write_csv(
        Path(out) / LOCALISATION_FILE,
        storage.summary_frame([o.row() for o in outcomes])[["strategy", "initialised", "final_error", "mean_bound"]],
        seed,
    )
    return outcomes


# --- Metrics ---


def select_vpt_frames(dataset: Dataset, spacing: float) -> list[tuple[float, FeatureFrame]]:
    """First frame at or past every ``k * spacing`` metres of true arc length."""
    frames = [f for f in dataset.feature_frames if f.true_pose is not None]
    if not frames or not dataset.has_truth:
        return []
    truth = dataset.ground_truth
    arcs = np.interp([f.timestamp for f in frames], truth.times(), truth.arc_lengths())
    picked: list[tuple[float, FeatureFrame]] = []
    last = -1
    for target in np.arange(0.0, truth.length + config.LATTICE_TOLERANCE, spacing):
        i = int(np.searchsorted(arcs, target - config.LATTICE_TOLERANCE, side="left"))
        if i < len(frames) and i != last:
            picked.append((float(arcs[i]), frames[i]))
            last = i
    return picked


def vpt_location(fmap: FeatureMap, manifest: RunManifest, arc: float, frame: FeatureFrame) -> VptBoundary:
    vpt = manifest.metrics.vpt
    return vpt_evaluate(frame, fmap, frame.true_pose, vpt.grid, manifest.icp, vpt.validity_tol, arc)


@dataclass
class MetricsResult:
    pau: dict = field(default_factory=dict)
    profile: Optional[VptProfile] = None
    margins: dict = field(default_factory=dict)
    paths: List[Path] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def _trajectory_length(states) -> float:
    return float(states["arc_length"].iloc[-1]) if len(states) else 0.0


def _state_bounds(states) -> tuple[np.ndarray, np.ndarray]:
    arcs = states["arc_length"].to_numpy(float)
    bound = 1.96 * np.sqrt(np.clip(np.maximum(states["cov00"], states["cov11"]).to_numpy(float), 0.0, None))
    return arcs, bound


def stage_metrics(
    manifest: RunManifest,
    out: PathLike,
    seed: int,
    threads: int = 1,
    vpt_runner: Optional[Callable[[Sequence[tuple[float, FeatureFrame]]], List[VptBoundary]]] = None,
) -> MetricsResult:
    """PAU curves, VPT profile and robustness margins plus their SVG renderings."""
    out = Path(out)
    fmap, dataset = load_inputs(out)
    metrics_cfg = manifest.metrics
    result = MetricsResult()

    states_by_mode = {}
    for mode in manifest.strategies:
        state_path = out / f"states_{mode.value}.csv"
        event_path = out / f"events_{mode.value}.csv"
        if not state_path.is_file() or not event_path.is_file():
            result.warnings.append(f"no logs for {mode.label}; skipped")
            logger.warning("No logs for %s in %s; skipping its metrics", mode.label, out)
            continue
        states = storage.read_state_log(state_path)
        states_by_mode[mode] = states
        length = _trajectory_length(states)
        pau = metrics_cfg.pau
        lengths = [l for l in pau.lengths if l <= length]
        if not lengths:
            result.warnings.append(f"{mode.label}: trajectory of {length:.1f} m is shorter than every PAU window")
            logger.warning("%s: no PAU window fits a %.1f m trajectory", mode.label, length)
            continue
        curve = pau_curve(storage.read_events(event_path), length, lengths, pau.stride, pau.wrap)
        result.pau[mode] = curve
        result.paths.append(storage.write_csv(out / f"pau_{mode.value}.csv", storage.pau_frame(curve), seed))

    if result.pau:
        result.paths.append(
            plots.plot_pau_curves(
                {m.label: c for m, c in result.pau.items()}, out / "pau.svg", metrics_cfg.pau.cutoff, seed=seed
            )
        )
    bounds = {m.label: _state_bounds(s) for m, s in states_by_mode.items()}
    if bounds:
        result.paths.append(plots.plot_bounds(bounds, out / "bounds.svg", seed=seed))

    frames = select_vpt_frames(dataset, metrics_cfg.vpt.spacing)
    if not frames:
        message = "dataset has no ground truth; VPT skipped"
        result.warnings.append(message)
        logger.warning(message)
        return result

    if vpt_runner is None:
        profile = vpt_profile(frames, fmap, metrics_cfg.vpt, manifest.icp, threads)
    else:
        profile = profile_from_boundaries(vpt_runner(frames), metrics_cfg.vpt)
    result.profile = profile
    result.paths += [
        storage.write_csv(out / "vpt_lattice.csv", storage.vpt_lattice_frame(profile.boundaries), seed),
        storage.write_csv(out / "vpt_profile.csv", storage.vpt_profile_frame(profile), seed),
        storage.write_csv(out / "vpt_windows.csv", storage.vpt_window_frame(profile), seed),
    ]
    for location in metrics_cfg.vpt.contour_locations:
        nearest = min(profile.boundaries, key=lambda b: abs(b.arc_length - location))
        result.paths.append(
            plots.plot_vpt_contour(
                nearest, out / f"vpt_contour_{location:g}.svg", metrics_cfg.vpt.require_all_headings, seed=seed
            )
        )

    flagged = ()
    for mode in metrics_cfg.margin_strategies:
        if mode not in states_by_mode:
            continue
        b_arcs, b_vals = bounds[mode.label]
        try:
            report = robustness_margin(profile.arc_lengths, profile.radii, b_arcs, b_vals)
        except EmptyOverlapError as exc:
            result.warnings.append(f"{mode.label}: {exc}")
            logger.warning("%s margin skipped: %s", mode.label, exc)
            continue
        result.margins[mode] = report
        result.paths.append(storage.write_csv(out / f"margin_{mode.value}.csv", storage.margin_frame(report), seed))
        if not flagged:
            flagged = report.intervals
    result.paths.append(
        plots.plot_margin(
            profile.arc_lengths,
            profile.radii,
            profile.windows,
            {m.label: bounds[m.label] for m in metrics_cfg.margin_strategies if m.label in bounds},
            out / "margin.svg",
            flagged,
            seed=seed,
        )
    )
    return result


# --- Report ---


def summary_rows(
    manifest: RunManifest, outcomes: Sequence[dict], metrics: MetricsResult
) -> List[dict]:
    """One summary row per strategy combining localisation and metric results."""
    by_label = {row["strategy"]: row for row in outcomes}
    rows = []
    for mode in manifest.strategies:
        row = dict(by_label.get(mode.label, {"strategy": mode.label}))
        curve: Optional[PauCurve] = metrics.pau.get(mode)
        cutoff = math.nan
        area = math.nan
        if curve is not None:
            try:
                cutoff = pau_cutoff(curve, manifest.metrics.pau.cutoff)
            except CutoffNotReachedError:
                pass
            if len(curve.lengths) >= 2:
                area = pau_area(curve)
        margin: Optional[MarginReport] = metrics.margins.get(mode)
        row.update(
            pau_cutoff=cutoff,
            pau_area=area,
            flagged_length=margin.flagged_length if margin is not None else math.nan,
        )
        rows.append(row)
    return rows


def stage_report(manifest: RunManifest, out: PathLike, seed: int, metrics: MetricsResult) -> Path:
    out = Path(out)
    localisation = storage.read_csv(out / LOCALISATION_FILE).to_dict("records")
    rows = summary_rows(manifest, localisation, metrics)
    return storage.write_csv(out / SUMMARY_FILE, storage.summary_frame(rows), seed)
