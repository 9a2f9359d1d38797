import pytest

from locrobust import pipeline
from locrobust.cli import main
from locrobust.schemas import StrategyMode
from locrobust.worker import celery_app, evaluate_vpt_location, localise_strategy


@pytest.fixture
def eager_celery():
    previous = {key: celery_app.conf.get(key) for key in ("task_always_eager", "task_eager_propagates")}
    celery_app.conf.update(task_always_eager=True, task_eager_propagates=True)
    yield celery_app
    celery_app.conf.update(previous)


@pytest.fixture
def simulated(manifest_file):
    assert main(["simulate", "--manifest", str(manifest_file)]) == 0
    manifest = pipeline.load_manifest(manifest_file)
    return manifest, manifest_file.parent / "out"


def test_localise_task_writes_logs(eager_celery, simulated):
    manifest, out = simulated
    row = localise_strategy.delay(manifest.model_dump_json(), str(out), "gps", 11).get()
    assert row["strategy"] == "Gps"
    assert row["error"] is None
    assert (out / "states_gps.csv").is_file()
    assert (out / "events_gps.csv").is_file()


def test_vpt_task_returns_flat_lattice(eager_celery, simulated):
    manifest, out = simulated
    flags = evaluate_vpt_location.delay(manifest.model_dump_json(), str(out), 0.0, 0).get()
    assert len(flags) == 27
    assert all(isinstance(f, bool) for f in flags)


def test_celery_backend_matches_threads(eager_celery, manifest_file):
    out = manifest_file.parent / "out"
    assert main(["simulate", "--manifest", str(manifest_file)]) == 0
    assert main(["localise", "--manifest", str(manifest_file), "--threads", "2"]) == 0
    assert main(["metrics", "--manifest", str(manifest_file), "--threads", "2"]) == 0
    threaded = {p.name: p.read_bytes() for p in out.glob("*.csv")}

    assert main(["localise", "--manifest", str(manifest_file), "--backend", "celery"]) == 0
    assert main(["metrics", "--manifest", str(manifest_file), "--backend", "celery"]) == 0
    celery = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert celery == threaded
    assert {f"states_{m.value}.csv" for m in StrategyMode} <= set(celery)
