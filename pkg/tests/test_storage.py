import json

import numpy as np
import pandas as pd

from locrobust import __version__
from locrobust.core import FeatureMap
from locrobust.fusion import StrategyRun, UpdateEvent, UpdateSource, run_strategy
from locrobust.metrics import MarginReport, VptProfile, pau_curve
from locrobust.schemas import IcpConfig, StrategyConfig, StrategyMode
from locrobust.storage import (
    STATE_COLUMNS,
    dataset_records,
    margin_frame,
    pau_frame,
    read_csv,
    read_dataset,
    read_events,
    read_map,
    read_pau,
    read_profile,
    read_seed,
    read_state_log,
    vpt_profile_frame,
    write_csv,
    write_dataset,
    write_map,
    write_strategy_run,
)


def test_csv_header_carries_version_and_seed(tmp_path):
    path = write_csv(tmp_path / "t.csv", pd.DataFrame({"a": [1.0, 2.5]}), seed=42)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == f"# locrobust {__version__} seed=42"
    assert lines[1] == "a"
    assert read_seed(path) == 42
    assert list(read_csv(path)["a"]) == [1.0, 2.5]


def test_map_round_trip(tmp_path, noise_free_run):
    fmap, _ = noise_free_run
    path = write_map(tmp_path / "map.csv", fmap, seed=1)
    again = read_map(path)
    assert [(f.id, f.cls) for f in again] == [(f.id, f.cls) for f in fmap]
    np.testing.assert_allclose(
        [(f.easting, f.northing) for f in again], [(f.easting, f.northing) for f in fmap], atol=1e-6
    )


def test_empty_map_is_header_only(tmp_path):
    path = write_map(tmp_path / "map.csv", FeatureMap([]), seed=0)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[1:] == ["id,class,easting,northing"]
    assert len(read_map(path)) == 0


def test_dataset_round_trip(tmp_path, noise_free_run):
    _, dataset = noise_free_run
    path = write_dataset(tmp_path / "dataset.jsonl", dataset, world="straight")
    assert read_seed(path) == dataset.seed
    again = read_dataset(path)
    assert again.odometry == dataset.odometry
    assert again.gps_readings == dataset.gps_readings
    assert again.feature_frames == dataset.feature_frames
    assert again.ground_truth == dataset.ground_truth
    assert again.speed == dataset.speed


def test_dataset_records_are_time_ordered(noise_free_run):
    _, dataset = noise_free_run
    records = dataset_records(dataset)
    assert records[0].type == "meta"
    rank = {"truth": 0, "odom": 1, "gps": 2, "frame": 3}
    keys = [(r.t, rank[r.type]) for r in records[1:]]
    assert keys == sorted(keys)


def test_dataset_file_is_one_json_object_per_line(tmp_path, noise_free_run):
    _, dataset = noise_free_run
    path = write_dataset(tmp_path / "dataset.jsonl", dataset)
    for line in path.read_text(encoding="utf-8").splitlines():
        assert isinstance(json.loads(line), dict)


def test_strategy_logs_round_trip(tmp_path, noise_free_run):
    fmap, dataset = noise_free_run
    run = run_strategy(dataset, fmap, StrategyConfig(mode=StrategyMode.POLE), IcpConfig())
    states, events = write_strategy_run(tmp_path, run, seed=3)
    assert states.name == "states_pole.csv"
    assert events.name == "events_pole.csv"
    log = read_state_log(states)
    assert list(log.columns) == STATE_COLUMNS
    assert len(log) == len(run.states)
    loaded = read_events(events)
    assert [(e.source, e.accepted) for e in loaded] == [(e.source, e.accepted) for e in run.events]
    np.testing.assert_allclose([e.arc_length for e in loaded], [e.arc_length for e in run.events], rtol=1e-9)


def test_empty_event_log_writes_header(tmp_path):
    run = StrategyRun(StrategyConfig(mode=StrategyMode.GPS))
    _, events = write_strategy_run(tmp_path, run, seed=0)
    assert read_events(events) == []


def test_pau_table_round_trip(tmp_path):
    curve = pau_curve([UpdateEvent(1.0, 4.0, UpdateSource.GPS, True)], 10.0, [1.0, 2.0, 3.0], 0.5)
    path = write_csv(tmp_path / "pau.csv", pau_frame(curve), seed=0)
    again = read_pau(path)
    np.testing.assert_array_equal(again.lengths, curve.lengths)
    np.testing.assert_allclose(again.probabilities, curve.probabilities, rtol=1e-9)


def test_vpt_profile_table_reads_back(tmp_path):
    profile = VptProfile(np.array([0.0, 2.0, 4.0]), np.array([1.5, 0.0, 0.75]), ())
    path = write_csv(tmp_path / "vpt_profile.csv", vpt_profile_frame(profile), seed=4)
    arcs, radii = read_profile(path)
    np.testing.assert_array_equal(arcs, profile.arc_lengths)
    np.testing.assert_array_equal(radii, profile.radii)
    assert read_seed(path) == 4


def test_margin_table_columns():
    report = MarginReport(
        np.array([0.0, 1.0]), np.array([1.0, 0.0]), np.array([0.5, 0.5]), np.array([0.5, -0.5]),
        np.array([False, True]), ((0.5, 1.0),),
    )
    df = margin_frame(report)
    assert list(df.columns) == ["arc_length", "vpt_radius", "bound", "margin", "flagged"]
    assert list(df["flagged"]) == [0, 1]
