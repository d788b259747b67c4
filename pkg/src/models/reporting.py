"""
CSV, SVG and console output of studies and estimator reports.
"""

import logging
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from matplotlib.tri import Triangulation
from rich.table import Table

from src.models.adapt import STUDY_COLUMNS
from src.models.estimate import indicator_names

logger = logging.getLogger(__name__)

ESTIMATOR_COLUMNS = ["level", "scheme", "estimator_name", "total", "error_energy", "efficiency_index"]
ENTITY_COLUMNS = ["entity_id", "value"]

FIGURE_SIZE = (8.0, 6.0)
FIGURE_DPI = 100
SERIES = [("err_energy", "error"), ("estA", "estimator A"), ("estB", "estimator B"), ("est_theorem", "estimator")]


# ---------------------------------------------------------------------- #
# CSV
# ---------------------------------------------------------------------- #
def write_study_csv(record, path):
    frame = record.to_frame()
    frame.to_csv(path, index=False, float_format="%.12e")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path


def read_study_csv(path):
    frame = pd.read_csv(path)
    missing = [c for c in STUDY_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} lacks columns {missing}")
    return frame[STUDY_COLUMNS]


def estimator_frame(record):
    """One row per level and named total."""
    rows = []
    for level, report in zip(record.levels, record.reports):
        totals = report.totals if report is not None else level.totals
        for name, value in totals.items():
            err = level.err_energy
            rows.append({
                "level": level.level,
                "scheme": record.scheme,
                "estimator_name": name,
                "total": value,
                "error_energy": err,
                "efficiency_index": value / err if err else None,
            })
    return pd.DataFrame(rows, columns=ESTIMATOR_COLUMNS)


def write_estimator_csv(record, path):
    estimator_frame(record).to_csv(path, index=False, float_format="%.12e")
    return path


def write_entity_csv(values, path):
    values = np.asarray(values, dtype=float)
    frame = pd.DataFrame({"entity_id": np.arange(values.size), "value": values}, columns=ENTITY_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.12e")
    return path


def write_entities(report, mesh, directory):
    """elements.csv and edges.csv with the squared indicators of the primary total."""
    names = indicator_names(report)
    elements = np.zeros(mesh.num_triangles)
    edges = np.zeros(mesh.num_edges)
    for name in names:
        if name in report.elements:
            elements += report.elements[name]
        else:
            edges += report.edges[name]
    return (write_entity_csv(elements, os.path.join(directory, "elements.csv")),
            write_entity_csv(edges, os.path.join(directory, "edges.csv")))


# ---------------------------------------------------------------------- #
# SVG
# ---------------------------------------------------------------------- #
def _slope_guide(ax, ndof, anchor, rate, label):
    guide = anchor * (ndof / ndof[0]) ** (-rate)
    ax.loglog(ndof, guide, linestyle="--", color="gray", linewidth=1.0, label=label)


def plot_study(record, path, title=None):
    """Log-log plot of error and estimators against the number of dofs."""
    ndof = record.column("ndof")
    fig, ax = plt.subplots(figsize=FIGURE_SIZE, dpi=FIGURE_DPI)
    anchor = None
    for column, label in SERIES:
        values = record.column(column)
        keep = np.isfinite(values) & (values > 0)
        if not keep.any():
            continue
        ax.loglog(ndof[keep], values[keep], marker="o", label=label)
        anchor = values[keep][0] if anchor is None else anchor
    if anchor is not None and len(ndof) > 1:
        _slope_guide(ax, ndof, anchor, 0.5, "ndof^-1/2")
        _slope_guide(ax, ndof, anchor, 1.0, "ndof^-1")
    ax.set_xlabel("ndof")
    ax.set_ylabel("error / estimator")
    ax.set_title(title or f"{record.scheme} ({record.kind})")
    ax.grid(True, which="major")
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_indicators(mesh, values, path, title="indicators"):
    """Elementwise indicators as a flat-shaded triangulation plot."""
    triangulation = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
    fig, ax = plt.subplots(figsize=FIGURE_SIZE, dpi=FIGURE_DPI)
    c = ax.tripcolor(triangulation, facecolors=np.sqrt(np.maximum(values, 0.0)), cmap=plt.cm.viridis)
    ax.triplot(triangulation, color="k", linewidth=0.2)
    fig.colorbar(c, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


# ---------------------------------------------------------------------- #
# console tables
# ---------------------------------------------------------------------- #
def _fmt(value):
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return "-"
    if isinstance(value, (int, np.integer)):
        return str(value)
    return f"{value:.4e}"


def study_table(record):
    table = Table(title=f"{record.scheme} ({record.kind})")
    for column in STUDY_COLUMNS:
        table.add_column(column, justify="right")
    for level in record.levels:
        table.add_row(*[_fmt(getattr(level, column)) for column in STUDY_COLUMNS])
    return table


def totals_table(report, title="estimators"):
    table = Table(title=title)
    table.add_column("estimator")
    table.add_column("total", justify="right")
    for name, value in report.totals.items():
        style = "bold" if name == report.primary else None
        table.add_row(name, _fmt(value), style=style)
    return table


def checks_table(results, seed):
    table = Table(title=f"verification (seed {seed})")
    table.add_column("check")
    table.add_column("result")
    table.add_column("value", justify="right")
    table.add_column("limit", justify="right")
    for result in results:
        table.add_row(result.name, "pass" if result.passed else "[red]FAIL[/red]",
                      _fmt(result.value), _fmt(result.limit))
    return table
