"""
Command-line interface: ``python -m locrobust <command> --manifest run.json``.

Commands:
    simulate   generate the map and the dataset record file
    localise   run the localisation strategies over the dataset
    metrics    PAU curves, VPT profile, robustness margins and plots
    report     run missing stages and write the per-strategy summary
    verify     compare optimised paths against brute-force oracles
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from . import __version__, config, pipeline, storage
from .errors import LocRobustError
from .oracle import run_verification

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def print_header(text: str) -> None:
    print("=" * 60)
    print(text)
    print("=" * 60)


def _fmt(value) -> str:
    if isinstance(value, float):
        return "-" if math.isnan(value) else f"{value:.3f}"
    return str(value)


def print_table(rows: List[dict]) -> None:
    if not rows:
        return
    columns = list(rows[0])
    widths = {c: max(len(c), *(len(_fmt(r.get(c))) for r in rows)) for c in columns}
    print("  ".join(c.ljust(widths[c]) for c in columns))
    print("-" * (sum(widths.values()) + 2 * (len(columns) - 1)))
    for row in rows:
        print("  ".join(_fmt(row.get(c)).ljust(widths[c]) for c in columns))


# --- Commands ---


def _context(args):
    manifest = pipeline.load_manifest(args.manifest)
    seed = pipeline.effective_seed(manifest, args.seed)
    out = pipeline.output_dir(manifest, args.out)
    return manifest, seed, out


def cmd_simulate(args) -> int:
    manifest, seed, out = _context(args)
    result = pipeline.stage_simulate(manifest, out, seed)
    print_header(f"WORLD {result.world.name!r} (seed={seed})")
    summary = result.summary
    print(f"Poles:        {summary['poles']}")
    print(f"Corners:      {summary['corners']}")
    print(f"Route length: {summary['route_length']:.1f} m")
    print(f"Output:       {out}")
    return 0


def _localise(args, manifest, seed, out) -> List[pipeline.LocalisationOutcome]:
    runner = None
    if args.backend == "celery":
        from .worker import localise_runner

        runner = localise_runner(manifest, str(out), seed)
    return pipeline.stage_localise(manifest, out, seed, args.threads, runner)


def cmd_localise(args) -> int:
    manifest, seed, out = _context(args)
    outcomes = _localise(args, manifest, seed, out)
    print_header("LOCALISATION SUMMARY")
    print_table([o.row() for o in outcomes])
    failed = [o for o in outcomes if not o.ok]
    for o in failed:
        print(f"❌ {o.mode.label}: {o.error}")
    return 1 if failed else 0


def _metrics(args, manifest, seed, out) -> pipeline.MetricsResult:
    vpt_runner = None
    if args.backend == "celery":
        from .worker import vpt_runner as celery_vpt_runner

        vpt_runner = celery_vpt_runner(manifest, str(out))
    return pipeline.stage_metrics(manifest, out, seed, args.threads, vpt_runner)


def cmd_metrics(args) -> int:
    manifest, seed, out = _context(args)
    result = _metrics(args, manifest, seed, out)
    print_header("METRICS")
    for mode, curve in result.pau.items():
        print(f"PAU {mode.label}: {curve.window_count} windows over {curve.trajectory_length:.1f} m")
    if result.profile is not None:
        nonzero = (result.profile.radii > 0).sum()
        print(f"VPT: {len(result.profile.radii)} locations, {nonzero} with non-zero radius")
    for mode, report in result.margins.items():
        print(f"Margin vs {mode.label} bound: {report.flagged_length:.1f} m flagged in {len(report.intervals)} intervals")
    for warning in result.warnings:
        print(f"⚠️  {warning}")
    print(f"{len(result.paths)} artifacts written to {out}")
    return 0


def cmd_report(args) -> int:
    manifest, seed, out = _context(args)
    status = 0
    if not (out / pipeline.DATASET_FILE).is_file():
        pipeline.stage_simulate(manifest, out, seed)
    if not (out / pipeline.LOCALISATION_FILE).is_file():
        if any(not o.ok for o in _localise(args, manifest, seed, out)):
            status = 1
    metrics = _metrics(args, manifest, seed, out)
    path = pipeline.stage_report(manifest, out, seed, metrics)
    print_header(f"REPORT {manifest.name!r} (seed={seed})")
    print_table(storage.read_csv(path).to_dict("records"))
    return status


def cmd_verify(args) -> int:
    results = run_verification(args.seed if args.seed is not None else config.DEFAULT_SEED, args.scale)
    print_header("ORACLE VERIFICATION")
    print_table([{"check": r.name, "result": "pass" if r.passed else "FAIL", "cases": r.cases, "detail": r.detail}
                 for r in results])
    return 0 if all(r.passed for r in results) else 1


# --- Parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locrobust", description="Localisation robustness toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="logging level (default: %(default)s)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", required=True, type=Path, help="run manifest JSON")
    common.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    common.add_argument("--threads", type=int, default=config.THREADS, help="worker threads")
    common.add_argument("--backend", choices=["threads", "celery"], default=config.BACKEND)
    common.add_argument("--out", type=Path, default=None, help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, text in (
        ("simulate", cmd_simulate, "generate map and dataset"),
        ("localise", cmd_localise, "run localisation strategies"),
        ("metrics", cmd_metrics, "compute PAU, VPT and margins"),
        ("report", cmd_report, "write the per-strategy summary"),
    ):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.set_defaults(handler=handler)

    verify = sub.add_parser("verify", help="compare against brute-force oracles")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--scale", type=float, default=1.0, help="fraction of the random cases to run")
    verify.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=LOG_FORMAT, stream=sys.stderr)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.handler(args)
    except (LocRobustError, ValidationError) as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return 1
