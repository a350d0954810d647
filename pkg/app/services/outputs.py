"""
Result files for experiment runs.

CSV files are written with sorted rows, "%.6g" floats and "\\n" line endings
so that reruns with the same seed are byte-identical. Charts are SVG with the
date metadata removed and a fixed hash salt for the same reason.
"""

import logging
import os
import re
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from app.models.errors import OutputError  # noqa: E402
from app.services.experiments import BAND_COLUMNS, CHECK_COLUMNS, ROW_COLUMNS, SummaryTable  # noqa: E402
from app.services.oracles import OracleReport  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6g"
OUTER_BAND_COLOR = "#f4c2d7"  # light pink, 10-90
INNER_BAND_COLOR = "#8e5ea2"  # purple, 25-75

plt.rcParams["svg.hashsalt"] = "mirg"


def _ensure_dir(path: str):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise OutputError(f"could not create output directory {path}: {e}") from e
    if not os.access(path, os.W_OK):
        raise OutputError(f"output directory is not writable: {path}")


def _write_csv(frame: pd.DataFrame, path: str) -> str:
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise OutputError(f"could not write {path}: {e}") from e
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def _write_text(text: str, path: str) -> str:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    except OSError as e:
        raise OutputError(f"could not write {path}: {e}") from e
    return path


def _save_svg(fig, path: str) -> str:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OutputError(f"could not write {path}: {e}") from e
    finally:
        plt.close(fig)
    logger.info(f"Wrote chart {path}")
    return path


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", text).strip("_")


# ============================================
# CHARTS
# ============================================

def _band_chart(bands: pd.DataFrame, family: str, path: str) -> str:
    """One panel per orientation: 10-90 and 25-75 bands, mean in black, reference line at 1."""
    part = bands[bands["family"] == family]
    orientations = sorted(part["orientation"].unique())
    fig, axes = plt.subplots(1, len(orientations), figsize=(5 * len(orientations), 4), squeeze=False)
    for ax, orientation in zip(axes[0], orientations):
        trace = part[part["orientation"] == orientation].sort_values("k")
        ax.fill_between(trace["k"], trace["q10"], trace["q90"], color=OUTER_BAND_COLOR, label="10-90%")
        ax.fill_between(trace["k"], trace["q25"], trace["q75"], color=INNER_BAND_COLOR, label="25-75%")
        ax.plot(trace["k"], trace["mean"], color="black", linewidth=1.0, label="mean")
        ax.axhline(1.0, color="grey", linestyle="--", linewidth=0.8)
        ax.set_xlabel("k")
        ax.set_ylabel("Hillish")
        ax.set_title(f"{family} {orientation}")
        ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path)


def _bias_chart(rows: pd.DataFrame, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for alpha, part in rows.groupby("alpha", sort=True):
        ax.plot(part["k"], part["bias"], marker="o", label=f"alpha={alpha:g}")
    ax.axhline(0.0, color="grey", linestyle="--", linewidth=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("bias of 1/H")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path)


# ============================================
# ENTRY POINTS
# ============================================

def emit_outputs(table: SummaryTable, directory: str) -> List[str]:
    """
    Write table1.csv (alpha,k,bias,mse,replicates) and table1_best.csv for Hill
    tables, hillish_bands.csv for Hillish bands, one SVG per trace family,
    hillish_checks.csv with the plateau verdicts, and notes.txt when the run
    produced notes. An empty table still gets its header.
    """
    _ensure_dir(directory)
    written = []

    if table.rows or table.experiment == "table1":
        rows = table.rows_frame()
        written.append(_write_csv(rows[ROW_COLUMNS], os.path.join(directory, "table1.csv")))
        if len(rows):
            written.append(_write_csv(table.best_k(), os.path.join(directory, "table1_best.csv")))
            written.append(_bias_chart(rows, os.path.join(directory, "table1_bias.svg")))

    if table.bands or table.experiment == "hrv_figure":
        bands = table.bands_frame()
        written.append(_write_csv(bands[BAND_COLUMNS], os.path.join(directory, "hillish_bands.csv")))
        for family in sorted(bands["family"].unique()):
            path = os.path.join(directory, f"hillish_{_slug(family)}.svg")
            written.append(_band_chart(bands, family, path))

    if table.checks:
        written.append(_write_csv(table.checks_frame()[CHECK_COLUMNS], os.path.join(directory, "hillish_checks.csv")))

    if table.notes:
        written.append(_write_text("\n".join(table.notes), os.path.join(directory, "notes.txt")))
    return written


def emit_report(report: OracleReport, directory: str, stem: str) -> List[str]:
    """<stem>.csv with one row per check and <stem>.txt with the readable summary."""
    _ensure_dir(directory)
    return [
        _write_csv(report.to_frame(), os.path.join(directory, f"{stem}.csv")),
        _write_text(report.to_text(), os.path.join(directory, f"{stem}.txt")),
    ]
