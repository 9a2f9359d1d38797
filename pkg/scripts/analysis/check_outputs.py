#!/usr/bin/env python3
"""
Summarise a run output directory: PAU cutoffs, longest update gaps,
mean 95 % bounds and flagged margin intervals.

Usage:
    python scripts/analysis/check_outputs.py <output_dir> [cutoff]
"""

import os
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(
    0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../", "../"))
)

import numpy as np  # noqa: E402

from locrobust.errors import CutoffNotReachedError  # noqa: E402
from locrobust.metrics import longest_absence, pau_cutoff  # noqa: E402
from locrobust.schemas import StrategyMode  # noqa: E402
from locrobust.storage import read_csv, read_events, read_pau, read_profile, read_seed  # noqa: E402

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
cutoff = float(sys.argv[2]) if len(sys.argv) > 2 else 0.05

if not out.is_dir():
    print(f"❌ {out} is not a directory")
    sys.exit(1)

print("=" * 60)
print(f"RUN OUTPUTS IN {out}")
print("=" * 60)

map_path = out / "map.csv"
if map_path.is_file():
    fmap = read_csv(map_path)
    print(f"Seed: {read_seed(map_path)}")
    print(f"Map features: {len(fmap)} ({', '.join(f'{k}={v}' for k, v in fmap['class'].value_counts().items())})")

print("\nLocalisation:")
print("-" * 60)
for mode in StrategyMode:
    states_path = out / f"states_{mode.value}.csv"
    events_path = out / f"events_{mode.value}.csv"
    if not states_path.is_file():
        print(f"{mode.label}: no logs")
        continue
    states = read_csv(states_path)
    bound = 1.96 * np.sqrt(np.maximum(states["cov00"], states["cov11"]).clip(lower=0.0))
    events = read_events(events_path)
    accepted = [e for e in events if e.accepted]
    length = float(states["arc_length"].iloc[-1])
    print(f"\n{mode.label}:")
    print(f"  States: {len(states)}, events: {len(events)} ({len(accepted)} accepted)")
    print(f"  Mean 95% bound: {bound.mean():.3f} m, max: {bound.max():.3f} m")
    print(f"  Longest absence of updates: {longest_absence(events, length):.1f} m of {length:.1f} m")

    pau_path = out / f"pau_{mode.value}.csv"
    if pau_path.is_file():
        try:
            print(f"  PAU cutoff at p={cutoff}: {pau_cutoff(read_pau(pau_path), cutoff):.1f} m")
        except CutoffNotReachedError:
            print(f"  ⚠️  PAU never reaches p={cutoff}")

    margin_path = out / f"margin_{mode.value}.csv"
    if margin_path.is_file():
        margin = read_csv(margin_path)
        flagged = margin[margin["flagged"] == 1]
        print(f"  Margin samples flagged: {len(flagged)} of {len(margin)}")
        if len(flagged):
            print(f"  ⚠️  Flagged from {flagged['arc_length'].min():.1f} m to {flagged['arc_length'].max():.1f} m")

profile_path = out / "vpt_profile.csv"
if profile_path.is_file():
    arcs, radii = read_profile(profile_path)
    print("\n" + "=" * 60)
    print("VALID PRIOR THRESHOLD")
    print("=" * 60)
    print(f"Locations: {len(arcs)}, zero radius: {int((radii == 0).sum())}")
    if (radii > 0).any():
        print(f"Median non-zero radius: {np.median(radii[radii > 0]):.2f} m")
    if len(radii):
        print(f"Narrowest: {radii.min():.2f} m at {arcs[int(np.argmin(radii))]:.1f} m")
