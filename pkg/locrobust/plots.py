"""
SVG renderings of the metric tables. CSVs are the source of truth; these are derived views.
"""

import logging
from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .metrics import PauCurve, VptBoundary, VptWindow, vpt_contour_levels  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Fixed id salt and no date stamp keep SVG output stable between runs; the
# description carries the tool version and seed like the CSV header line.
_SVG_RC = {"svg.hashsalt": "locrobust", "svg.fonttype": "path"}


def _save(fig, path: PathLike, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_SVG_RC):
        fig.savefig(
            path, format="svg", metadata={"Date": None, "Description": f"locrobust {__version__} seed={seed}"}
        )
    plt.close(fig)
    logger.debug("Wrote %s", path)
    return path


def plot_pau_curves(curves: Mapping[str, PauCurve], path: PathLike, cutoff: float = 0.05, *, seed: int) -> Path:
    """PAU curves overlaid per strategy with the cutoff probability marked."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for label, curve in curves.items():
            ax.plot(curve.lengths, curve.probabilities, label=label, drawstyle="steps-post")
        ax.axhline(cutoff, color="grey", linestyle="--", linewidth=0.8, label=f"p = {cutoff:g}")
        ax.set_xlabel("window length l (m)")
        ax.set_ylabel("P(AU_l)")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        ax.grid(alpha=0.3)
    return _save(fig, path, seed)


def plot_bounds(series: Mapping[str, tuple[np.ndarray, np.ndarray]], path: PathLike, *, seed: int) -> Path:
    """95 % position bound along the route, one line per strategy."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for label, (arcs, bounds) in series.items():
            ax.plot(arcs, bounds, label=label, linewidth=1.0)
        ax.set_xlabel("arc length (m)")
        ax.set_ylabel("95% position bound (m)")
        ax.set_yscale("log")
        ax.legend()
        ax.grid(alpha=0.3, which="both")
    return _save(fig, path, seed)


def plot_vpt_contour(boundary: VptBoundary, path: PathLike, require_all_headings: bool = True, *, seed: int) -> Path:
    """Nested valid regions for growing heading tolerance at one map location."""
    levels = vpt_contour_levels(boundary, require_all_headings)
    xy = boundary.grid.xy_offsets()
    # Cells valid at a tighter tolerance get the higher level value.
    stacked = np.zeros((len(xy), len(xy)))
    for rank, (theta, mask) in enumerate(sorted(levels.items())):
        stacked[mask] = rank + 1
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        mesh = ax.pcolormesh(xy, xy, stacked.T, shading="nearest", cmap="viridis", vmin=0, vmax=len(levels))
        cbar = fig.colorbar(mesh, ax=ax, ticks=range(len(levels) + 1))
        cbar.ax.set_yticklabels(["none"] + [f"±{t:.2f}" for t in sorted(levels)])
        cbar.set_label("valid up to heading offset (rad)")
        ax.set_xlabel("Δ easting (m)")
        ax.set_ylabel("Δ northing (m)")
        ax.set_title(f"VPT at {boundary.arc_length:.1f} m")
        ax.set_aspect("equal")
    return _save(fig, path, seed)


def plot_margin(
    arcs: Sequence[float],
    radii: Sequence[float],
    windows: Sequence[VptWindow],
    bounds: Mapping[str, tuple[np.ndarray, np.ndarray]],
    path: PathLike,
    flagged: Sequence[tuple[float, float]] = (),
    *,
    seed: int,
) -> Path:
    """VPT radius span/median per window overlaid with strategy bounds and flagged intervals."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(9, 4.5))
        ax.scatter(arcs, radii, s=4, color="tab:blue", alpha=0.4, label="VPT radius")
        if windows:
            mids = [0.5 * (w.start + w.end) for w in windows]
            ax.vlines(mids, [w.low for w in windows], [w.high for w in windows], color="tab:blue", linewidth=2)
            ax.plot(mids, [w.median for w in windows], color="tab:blue", linewidth=1.2, label="median radius")
        for label, (b_arcs, b_vals) in bounds.items():
            ax.plot(b_arcs, b_vals, linewidth=1.0, label=f"{label} bound")
        for start, end in flagged:
            ax.axvspan(start, end, color="tab:red", alpha=0.12)
        ax.set_xlabel("arc length (m)")
        ax.set_ylabel("m")
        ax.legend(loc="upper right")
        ax.grid(alpha=0.3)
    return _save(fig, path, seed)
