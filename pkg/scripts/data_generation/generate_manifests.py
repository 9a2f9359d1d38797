#!/usr/bin/env python3
"""
Write the preset world and sensor specs plus one run manifest per preset world.

Usage:
    python scripts/data_generation/generate_manifests.py [output_dir]

The files land in ``manifests/`` by default and can be edited before running
``python -m locrobust report --manifest manifests/<name>.json``.
"""

import json
import os
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(
    0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../", "../"))
)

from locrobust.schemas import RunManifest  # noqa: E402
from locrobust.sim import SENSOR_PRESETS, WORLD_PRESETS  # noqa: E402


def write_json(path: Path, payload: str) -> None:
    path.write_text(json.dumps(json.loads(payload), indent=2) + "\n", encoding="utf-8")
    print(f"✅ Wrote {path}")


def generate(directory: Path) -> int:
    directory.mkdir(parents=True, exist_ok=True)
    count = 0

    for name, factory in SENSOR_PRESETS.items():
        write_json(directory / f"sensors_{name}.json", factory().model_dump_json())
        count += 1

    for name, factory in WORLD_PRESETS.items():
        world = factory()
        write_json(directory / f"world_{name}.json", world.model_dump_json())
        manifest = RunManifest(
            name=name,
            world=f"world_{name}.json",
            sensors="sensors_default.json",
            seed=world.seed,
        )
        write_json(directory / f"{name}.json", manifest.model_dump_json(exclude_none=True))
        count += 2
    return count


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("manifests")
    print("=" * 60)
    print(f"GENERATING PRESET MANIFESTS IN {target}")
    print("=" * 60)
    written = generate(target)
    print("=" * 60)
    print(f"🎉 Wrote {written} files.")
