"""Figures from the exported series files.

Reads ``series/<stem>.*.csv`` written by the harness, so figures can be
regenerated from a results directory without rerunning anything.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 3.4  # single column, inches
params = {
    "font.family": "serif",
    "font.size": 8,
    "axes.labelsize": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "mathtext.fontset": "stix",
    "lines.linewidth": 1.0,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 150,
    "savefig.dpi": 300,
    "savefig.bbox": "tight",
}

SERIES_KINDS = ("ee_error", "smoothness", "paths")


def _load(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def plot_ee_error(data: np.ndarray, title: str = ""):
    fig, ax = plt.subplots()
    for j, name in enumerate(("x", "y", "z"), start=1):
        ax.plot(data[:, 0], data[:, j], label=f"$|e_{name}|$")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("end-effector error [m]")
    ax.legend(frameon=False)
    ax.set_title(title)
    return fig


def plot_smoothness(data: np.ndarray, title: str = ""):
    fig, ax = plt.subplots()
    sc = ax.scatter(data[:, 0], data[:, 1], c=data[:, 2], s=3, cmap="viridis")
    fig.colorbar(sc, ax=ax, label="turn angle [rad]")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title)
    return fig


def plot_paths(data: np.ndarray, title: str = ""):
    fig, ax = plt.subplots()
    ax.plot(data[:, 0], data[:, 1], "--", label="global")
    ax.plot(data[:, 2], data[:, 3], label="travelled")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(frameon=False)
    ax.set_title(title)
    return fig


_PLOTTERS = {"ee_error": plot_ee_error, "smoothness": plot_smoothness, "paths": plot_paths}


def export_plots(results_dir, out=None, fmt: str = "png") -> list[Path]:
    """Render one figure per series file under ``results_dir/series``.

    Figures go to ``out`` (default ``results_dir/figures``). Returns the
    written paths in sorted order.
    """
    results_dir = Path(results_dir)
    series = results_dir / "series"
    out = Path(out) if out is not None else results_dir / "figures"
    if not series.is_dir():
        raise FileNotFoundError(f"no series directory under {results_dir}")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(params):
        for f in sorted(series.glob("*.csv")):
            stem, _, kind = f.stem.rpartition(".")
            if kind not in _PLOTTERS:
                continue
            data = _load(f)
            if len(data) == 0:
                continue
            fig = _PLOTTERS[kind](data, title=stem.replace("__", " "))
            target = out / f"{f.stem}.{fmt}"
            fig.savefig(target, metadata={"Software": None} if fmt == "png" else None)
            plt.close(fig)
            written.append(target)
    return written
