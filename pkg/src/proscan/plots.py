"""Optional SVG figures.  Failures are logged and never abort a run."""
from __future__ import annotations

import logging
from pathlib import Path

log = logging.getLogger(__name__)

_LABELS = {
    "lateral-scan": ("x (nm)", "y (nm)"),
    "coarse-approach": ("gap (nm)", "monitor intensity"),
    "fine-approach-plasmon": ("gap (nm)", "resonance shift (nm)"),
    "linescan-coarse": ("lateral offset (nm)", "enhancement"),
    "linescan-fine": ("lateral offset (nm)", "enhancement"),
    "stability": ("time (s)", "counts per bin"),
    "localization-precision": ("x (nm)", "y (nm)"),
}


def _xy(kind, series):
    if kind == "lateral-scan":
        t = series["trajectory"]
        return t[:, 0], t[:, 1], "o-"
    if kind == "coarse-approach":
        t = series["trace"]
        return t[:, 0], t[:, 1], "-"
    if kind == "fine-approach-plasmon":
        return series["gap"], series["shift"], "o-"
    if kind.startswith("linescan"):
        return series["offset"], series["enhancement"], "-"
    if kind == "stability":
        y = series["trace"]
        return [i * 1e-3 for i in range(len(y))], y, "-"
    xy = series["xy"]
    return xy[:, 0], xy[:, 1], "."


def plot_scenario(kind, series, out_dir) -> list:
    """Write ``plot.svg`` for a scenario; returns the written paths."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = "proscan"
        x, y, style = _xy(kind, series)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(x, y, style, ms=3, lw=1)
        ax.set_xlabel(_LABELS[kind][0])
        ax.set_ylabel(_LABELS[kind][1])
        ax.set_title(kind)
        fig.tight_layout()
        path = Path(out_dir) / "plot.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return [path]
    except Exception as exc:  # plotting is best effort
        log.warning("plot for %s skipped: %s", kind, exc)
        return []
