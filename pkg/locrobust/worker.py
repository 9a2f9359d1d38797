"""
Celery worker for distributing strategy runs and VPT locations.

Tasks exchange JSON payloads and call the same pipeline functions as the
thread backend, so artifacts are identical whichever backend produced them.
"""

import os
from functools import lru_cache
from pathlib import Path

import numpy as np
from celery import Celery

from . import config, pipeline
from .metrics import VptBoundary
from .schemas import RunManifest, StrategyMode

celery_app = Celery(
    "worker", broker=config.CELERY_BROKER_URL, backend=config.CELERY_RESULT_BACKEND
)

celery_app.config_from_object("locrobust.celeryconfig")
# prefork is unavailable on Windows
celery_app.conf.update(worker_pool="solo" if os.name == "nt" else "prefork")


@lru_cache(maxsize=4)
def _cached_inputs(out_dir: str, stamp: int):
    return pipeline.load_inputs(out_dir)


def _inputs(out_dir: str):
    # Keyed on the dataset mtime so a re-simulated run is reloaded.
    dataset = Path(out_dir) / pipeline.DATASET_FILE
    if not dataset.is_file():
        return pipeline.load_inputs(out_dir)
    return _cached_inputs(out_dir, dataset.stat().st_mtime_ns)


@celery_app.task(name="locrobust.worker.localise_strategy")
def localise_strategy(manifest_json: str, out_dir: str, mode: str, seed: int) -> dict:
    """
    Runs one localisation strategy and writes its state and event logs.
    """
    manifest = RunManifest.model_validate_json(manifest_json)
    fmap, dataset = _inputs(out_dir)
    outcome = pipeline.localise_one(dataset, fmap, manifest, StrategyMode(mode))
    pipeline.write_outcome(out_dir, outcome, seed)
    return {**outcome.row(), "error": outcome.error}


@celery_app.task(name="locrobust.worker.evaluate_vpt_location")
def evaluate_vpt_location(manifest_json: str, out_dir: str, arc_length: float, frame_index: int) -> list:
    """
    Evaluates the VPT lattice at one frame and returns the flattened validity flags.
    """
    manifest = RunManifest.model_validate_json(manifest_json)
    fmap, dataset = _inputs(out_dir)
    frame = dataset.feature_frames[frame_index]
    boundary = pipeline.vpt_location(fmap, manifest, arc_length, frame)
    return [bool(v) for v in boundary.valid.ravel()]


# --- Dispatch helpers used by the pipeline when the celery backend is selected ---


def localise_runner(manifest: RunManifest, out_dir: str, seed: int):
    """Strategy runner for ``pipeline.stage_localise`` that executes on the worker."""
    payload = manifest.model_dump_json()

    def run(mode: StrategyMode) -> pipeline.LocalisationOutcome:
        row = localise_strategy.delay(payload, str(out_dir), mode.value, seed).get()
        return pipeline.LocalisationOutcome(
            mode,
            error=row["error"],
            initialised=row["initialised"],
            final_error=row["final_error"],
            mean_bound=row["mean_bound"],
        )

    return run


def vpt_runner(manifest: RunManifest, out_dir: str):
    """VPT runner for ``pipeline.stage_metrics``; lattices are assembled in location order."""
    payload = manifest.model_dump_json()

    def run(frames) -> list[VptBoundary]:
        _, dataset = _inputs(str(out_dir))
        index = {f.timestamp: i for i, f in enumerate(dataset.feature_frames)}
        pending = [
            evaluate_vpt_location.delay(payload, str(out_dir), arc, index[frame.timestamp]) for arc, frame in frames
        ]
        grid = manifest.metrics.vpt.grid
        return [
            VptBoundary(arc, frame.true_pose, grid, np.array(task.get(), dtype=bool).reshape(grid.shape))
            for (arc, frame), task in zip(frames, pending)
        ]

    return run
