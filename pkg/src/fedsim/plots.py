"""Figure rendering for exported series (matplotlib, file output only)."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .store import ExperimentRecord, SeriesExport  # noqa: E402

_AXIS_LABELS = {
    "rounds": "communication round",
    "bits": "cumulative uplink bits",
    "oracle_calls": "cumulative gradient oracle calls",
    "wall_clock": "wall clock [s]",
    "f": "objective value",
    "grad_norm": "||grad F||",
    "loss": "sampled train loss",
}


def render_series(export: SeriesExport, path: str | Path,
                  labels: Optional[dict[str, str]] = None,
                  title: Optional[str] = None) -> Path:
    """Render one line per run to a PNG next to the CSV export."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for rid in export.columns:
        pts = export.series[rid]
        if not pts:
            continue
        xs, ys = zip(*pts)
        label = labels.get(rid, rid) if labels else rid
        ax.plot(xs, ys, label=label, linewidth=1.4)
    if export.scale == "log":
        ax.set_yscale("log")
    ax.set_xlabel(_AXIS_LABELS.get(export.x_axis, export.x_axis))
    ax.set_ylabel(_AXIS_LABELS.get(export.y_axis, export.y_axis))
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def run_labels(records: Sequence[ExperimentRecord]) -> dict[str, str]:
    return {r.id: f"{r.config.algorithm} / {r.config.compressor}"
            for r in records}
