import json
import math
from pathlib import Path

import numpy as np
import pytest

from locrobust.core import FeatureClass, FeatureFrame, FeatureMap, MapFeature, Observation, Pose2D, inverse, transform_points
from locrobust.schemas import RouteSpec, WorldSpec, ZoneSpec
from locrobust.sim import build_route, generate_world, noise_free_sensors, simulate_run

DATA_DIR = Path(__file__).parent / "data"


def frame_from_map(features, pose: Pose2D, timestamp: float = 0.0) -> FeatureFrame:
    """Noise-free frame observing every feature from ``pose``."""
    pts = np.array([[f.easting, f.northing] for f in features], dtype=float).reshape(-1, 2)
    local = transform_points(inverse(pose), pts)
    return FeatureFrame(timestamp, tuple(Observation(f.cls, x, y) for f, (x, y) in zip(features, local)), pose)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def dense_features():
    """Asymmetric constellation of poles and corners around the origin."""
    rng = np.random.default_rng(42)
    features = []
    points = []
    while len(points) < 24:
        p = rng.uniform(-12.0, 12.0, 2)
        if np.hypot(*p) > 1.5 and all(np.hypot(*(p - q)) >= 3.5 for q in points):
            points.append(p)
    for i, p in enumerate(points):
        cls = FeatureClass.POLE if i % 3 else FeatureClass.CORNER
        features.append(MapFeature(i, cls, float(p[0]), float(p[1])))
    return features


@pytest.fixture
def dense_map(dense_features) -> FeatureMap:
    return FeatureMap(dense_features)


@pytest.fixture
def square_map() -> FeatureMap:
    return FeatureMap(
        [
            MapFeature(0, FeatureClass.POLE, 5.0, 5.0),
            MapFeature(1, FeatureClass.POLE, -5.0, 5.0),
            MapFeature(2, FeatureClass.POLE, -5.0, -5.0),
            MapFeature(3, FeatureClass.POLE, 5.0, -5.0),
        ]
    )


@pytest.fixture
def straight_world() -> WorldSpec:
    return WorldSpec(
        name="straight",
        route=RouteSpec(waypoints=[(0.0, 0.0), (100.0, 0.0)]),
        zones=[ZoneSpec(start=0.0, end=100.0, pole_density=60.0, corner_density=30.0)],
        seed=1,
    )


@pytest.fixture
def noise_free_run(straight_world):
    fmap, route = generate_world(straight_world)
    dataset = simulate_run(fmap, route, noise_free_sensors(), speed=5.0, seed=3)
    return fmap, dataset


@pytest.fixture
def manifest_file(tmp_path) -> Path:
    """Copy of the static test manifest with its spec files next to it."""
    for name in ("manifest.json", "world.json", "sensors.json"):
        (tmp_path / name).write_text((DATA_DIR / name).read_text(encoding="utf-8"), encoding="utf-8")
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    manifest["output_dir"] = str(tmp_path / "out")
    (tmp_path / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    return tmp_path / "manifest.json"


def heading_close(a: float, b: float, tol: float) -> bool:
    return abs(math.remainder(a - b, 2 * math.pi)) <= tol
