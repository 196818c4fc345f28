"""CSV tables and SVG charts for study results."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .studies import StudyResult  # noqa: E402

__all__ = ["CSV_COLUMNS", "format_row", "write_csv", "write_chart", "write_capacity_summary",
           "emit_outputs"]

CSV_COLUMNS = ["study", "param", "hour", "atc_mw", "status", "iters"]

_STYLE = {
    "figure.figsize": (7.0, 4.0),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "windatc",
    "svg.fonttype": "path",
}

_TITLES = {
    "correlation_sweep": "ATC by hour for each spatial correlation",
    "correlation_multi": "ATC by hour for each spatial correlation, four farms",
    "capacity_sweep": "ATC by hour for each farm capacity",
    "location_study": "ATC by farm connection location",
    "integration_method": "ATC by wind integration method",
    "time_series": "ATC and load coefficient over the day",
}

_LEGEND_TITLES = {
    "correlation_sweep": "rho",
    "correlation_multi": "rho",
    "capacity_sweep": "MW per farm",
}


def format_row(row) -> list[str]:
    atc = "nan" if math.isnan(row.atc_mw) else f"{row.atc_mw:.6f}"
    return [row.study, row.param, f"{row.hour:.6g}", atc, row.status, str(row.iters)]


def write_csv(result: StudyResult, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for row in result.sorted_rows():
            wr.writerow(format_row(row))
    return path


def write_capacity_summary(result: StudyResult, path: Path) -> Path:
    s = result.summary
    plateau = s.get("plateau_capacity_mw")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["capacity_mw", "peak_atc_mw", "plateau"])
        for cap, peak in zip(s["capacities_mw"], s["peak_atc_mw"]):
            flag = "yes" if plateau is not None and cap >= plateau else "no"
            wr.writerow([f"{cap:g}", f"{peak:.6f}", flag])
    return path


def _line_chart(ax, result: StudyResult):
    for p in result.params:
        hours, atc = result.series(p)
        ax.plot(hours, atc, marker="o", ms=2.5, lw=1.0, label=p)
    ax.set_xlabel("hour")
    ax.set_ylabel("ATC (MW)")
    ax.legend(title=_LEGEND_TITLES.get(result.study), ncol=2)


def _bar_chart(ax, result: StudyResult):
    hours = sorted({r.hour for r in result.rows})
    width = 0.8 / max(len(result.params), 1)
    x = np.arange(len(hours))
    colors = plt.get_cmap("tab20")
    for k, p in enumerate(result.params):
        vals = [result.value(p, h) for h in hours]
        ax.bar(x + (k - (len(result.params) - 1) / 2) * width, vals, width, label=p,
               color=colors(k % 20))
    ax.set_xticks(x)
    ax.set_xticklabels([f"{h:g}" for h in hours])
    ax.set_xlabel("hour")
    ax.set_ylabel("ATC (MW)")
    ax.legend(loc="upper left", bbox_to_anchor=(1.01, 1.0))


def _time_series_chart(ax, result: StudyResult):
    rows = result.sorted_rows()
    t = [r.hour for r in rows]
    ax.plot(t, [r.atc_mw for r in rows], lw=1.0, color="C0")
    ax.set_xlabel("hour")
    ax.set_ylabel("ATC (MW)", color="C0")
    ax2 = ax.twinx()
    ax2.plot(t, [float(r.param) for r in rows], lw=1.0, ls="--", color="C3")
    ax2.set_ylabel("load coefficient", color="C3")
    ax2.grid(False)


def write_chart(result: StudyResult, path: Path) -> Path | None:
    """One SVG per study; nothing is written for an empty result."""
    if not result.rows:
        return None
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if result.study in ("location_study", "integration_method"):
            _bar_chart(ax, result)
        elif result.study == "time_series":
            _time_series_chart(ax, result)
        else:
            _line_chart(ax, result)
        ax.set_title(_TITLES.get(result.study, result.study))
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def emit_outputs(result: StudyResult, directory: Path) -> list[Path]:
    """Write ``<study>.csv``, ``<study>.svg`` and any study summary into ``directory``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        written = [write_csv(result, directory / f"{result.study}.csv")]
        chart = write_chart(result, directory / f"{result.study}.svg")
        if chart is not None:
            written.append(chart)
        if result.study == "capacity_sweep" and result.summary:
            written.append(write_capacity_summary(result, directory / "capacity_summary.csv"))
    except OSError as exc:
        raise OSError(f"cannot write outputs to {directory}: {exc}") from exc
    return written
