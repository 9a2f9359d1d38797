#!/usr/bin/env python3
"""
Cleanup script to remove run outputs and generated files.

Usage:
    python scripts/cleanup.py [--outputs]

Python and Celery artifacts are always removed; run output directories only
with ``--outputs`` (``LOCROBUST_OUT``, default ``out/``).
"""

import glob
import os
import shutil
import sys


def _remove(item: str) -> bool:
    try:
        if os.path.isfile(item):
            os.remove(item)
            print(f"✅ Removed file: {item}")
            return True
        if os.path.isdir(item):
            shutil.rmtree(item)
            print(f"✅ Removed directory: {item}")
            return True
    except OSError as e:
        print(f"⚠️  Could not remove {item}: {e}")
    return False


def cleanup(outputs: bool = False):
    """Remove temporary and generated files from the project."""

    print("🧹 Cleaning up project directory...")
    print("=" * 60)

    patterns = [
        # Celery and Redis
        "celerybeat-schedule*",
        "dump.rdb",
        # Python artifacts
        "locrobust/__pycache__",
        "tests/__pycache__",
        "scripts/**/__pycache__",
        ".pytest_cache",
        # Temporary files
        ".tmp_*",
        "*.log",
    ]
    if outputs:
        patterns.append(os.getenv("LOCROBUST_OUT", "out"))

    removed_count = 0
    for pattern in patterns:
        for item in glob.glob(pattern, recursive="**" in pattern):
            removed_count += _remove(item)

    print("=" * 60)
    print(f"🎉 Cleanup complete! Removed {removed_count} items.")


if __name__ == "__main__":
    cleanup(outputs="--outputs" in sys.argv[1:])
