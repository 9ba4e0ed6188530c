"""Static SVG figures of entropy against initial entanglement."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stats import SweepResult  # noqa: E402

__all__ = ["emit_plot", "plot_experiment", "MEASURE_LABELS"]

MEASURE_LABELS = {
    "meyer_wallach": "Meyer-Wallach Q",
    "entanglement_entropy": "entanglement entropy [bits]",
    "concurrence": "concurrence C",
}
Y_LABELS = {"s_t": "time-averaged entropy $S_t$ [bits]", "delta_s": r"$\Delta S_t$ [bits]"}
SCATTER_MAX = 4000


def _subsample(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.linspace(0, n - 1, cap).round().astype(int)


def emit_plot(results: SweepResult | Sequence[SweepResult], path: str | os.PathLike, *,
              colors: Sequence[str | None] | None = None, axis_markers: Sequence[float | None] | None = None,
              mark_means: bool = False, title: str | None = None) -> None:
    """Scatter, bin-mean polyline and dashed fit line for each result.

    ``axis_markers`` puts a bold marker at ``x = 0`` per series (e.g. the
    mean entropy of separable states); ``mark_means`` adds a bold dot at the
    ensemble average of every series.
    """
    if isinstance(results, SweepResult):
        results = [results]
    if not results or any(len(r.records) == 0 for r in results):
        raise ValueError("every plotted series needs at least one record")
    palette = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for k, res in enumerate(results):
        color = (colors[k] if colors and colors[k] else None) or palette[k % len(palette)]
        x = res.records.entanglement
        y = res.records.column(res.y_field)
        idx = _subsample(len(x), SCATTER_MAX // len(results) or 1)
        ax.scatter(x[idx], y[idx], s=2, alpha=0.25, color=color, rasterized=False, linewidths=0)
        if res.bins:
            ax.plot([b.center for b in res.bins], [b.mean for b in res.bins], color=color, lw=1.5,
                     label=res.label)
        else:
            ax.plot([], [], color=color, label=res.label)
        if res.fit is not None:
            xs = np.array([x.min(), x.max()])
            ax.plot(xs, res.fit(xs), color=color, ls="--", lw=1.0)
        if axis_markers and axis_markers[k] is not None:
            ax.plot([0.0], [axis_markers[k]], marker="s", ms=8, color=color, clip_on=False, zorder=5)
        if mark_means:
            ax.plot([np.mean(x)], [np.mean(y)], marker="o", ms=9, color=color, mec="black", zorder=6)
    ax.set_xlabel(MEASURE_LABELS.get(results[0].records.ent_measure, results[0].records.ent_measure))
    ax.set_ylabel(Y_LABELS.get(results[0].y_field, results[0].y_field))
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_experiment(outcome, path: str | os.PathLike) -> None:
    """Figure for every series of a finished experiment."""
    results = [s.result for s in outcome.series]
    colors = [s.series.color for s in outcome.series]
    markers = []
    for s in outcome.series:
        sep = s.references.get("separable")
        markers.append(None if sep is None else float(np.mean(sep.records.column(s.result.y_field))))
    emit_plot(results, path, colors=colors, axis_markers=markers,
              mark_means=outcome.config.mark_means, title=outcome.config.name)
