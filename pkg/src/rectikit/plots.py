"""Figure output for sweeps and sample clouds (SVG via matplotlib's Agg backend)."""

from __future__ import annotations

import io
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ._io import atomic_write_bytes  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "rectikit",  # stable element ids -> byte-identical reruns
}

METRICS = (
    ("frechet_gauss", "Frechet distance (lower is better)"),
    ("cond_fidelity", "condition fidelity"),
    ("pred_drift", "eps prediction drift"),
    ("endpoint_gap", "endpoint gap"),
)


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_bytes(Path(path), buf.getvalue())


def _metric_grid(reports, x_field, series_field, x_label, log_x):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
        series = defaultdict(list)
        for r in reports:
            series[(r.model_id, getattr(r, series_field))].append(r)
        for ax, (name, title) in zip(axes.flat, METRICS):
            for (mid, key), rows in series.items():
                rows = sorted(rows, key=lambda r: getattr(r, x_field))
                xs = [getattr(r, x_field) for r in rows]
                ax.plot(xs, [getattr(r, name) for r in rows], marker="o",
                        label=f"{mid} ({series_field.split('_')[-1]}={key:g})")
            if log_x:
                ax.set_xscale("log")
            ax.set_xlabel(x_label)
            ax.set_title(title)
        axes.flat[0].legend(loc="best")
        fig.tight_layout()
    return fig


def plot_vs_steps(reports, path) -> None:
    """One line per (model, guidance) showing every metric against step count."""
    _save(_metric_grid(reports, "steps", "guidance_w", "sampling steps", True), path)


def plot_vs_guidance(reports, path) -> None:
    """One line per (model, step count) showing every metric against guidance scale."""
    _save(_metric_grid(reports, "guidance_w", "steps", "guidance scale w", False), path)


def scatter(x, c, path, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.scatter(x[:, 0], x[:, 1], c=c, s=3, cmap="tab10", vmin=0, vmax=9)
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        fig.tight_layout()
    _save(fig, path)
