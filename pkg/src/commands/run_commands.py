"""
Solve and study commands.
"""

import logging
import os
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console

from src.commands.verify_commands import run_verification
from src.config import load_config
from src.models.adapt import StudyRecord, adaptive_loop, solve_and_estimate, uniform_loop
from src.models.crouzeix_raviart import cr_poisson_demo
from src.models.errors import PlateError
from src.models.estimate import indicator_names
from src.models.mesh import refine_uniform, unit_square
from src.models.reporting import (
    plot_indicators,
    plot_study,
    study_table,
    totals_table,
    write_entities,
    write_estimator_csv,
    write_study_csv,
)

logger = logging.getLogger(__name__)
console = Console()

CONFIG_OPTION = typer.Option(..., "--config", "-c", help="INI run configuration.")
OUT_OPTION = typer.Option(None, "--out", "-o", help="Output directory (overrides [output] directory).")
SVG_OPTION = typer.Option(None, "--svg/--no-svg", help="Write SVG plots (overrides [output] svg).")


def _prepare(config_path, out, svg):
    config = load_config(str(config_path))
    directory = str(out) if out is not None else config.output.directory
    os.makedirs(directory, exist_ok=True)
    return config, directory, config.output.svg if svg is None else svg


def _build_mesh(config):
    try:
        return config.build_mesh()
    except PlateError as exc:
        raise exc.with_stage("mesh")


def _write_record(record, directory, svg):
    write_study_csv(record, os.path.join(directory, "study.csv"))
    write_estimator_csv(record, os.path.join(directory, "estimators.csv"))
    if svg:
        plot_study(record, os.path.join(directory, "study.svg"))
    console.print(study_table(record))


def solve(
    config_path: Path = CONFIG_OPTION,
    out: Optional[Path] = OUT_OPTION,
    svg: Optional[bool] = SVG_OPTION,
):
    """Solve once on the configured mesh and report the estimators."""
    config, directory, svg = _prepare(config_path, out, svg)
    mesh = _build_mesh(config)
    case = config.build_case()
    u_h, report, row = solve_and_estimate(mesh, config.scheme, case, config.source.degree)
    record = StudyRecord(config.scheme.name, "solve")
    record.append(row, u_h, report)
    write_study_csv(record, os.path.join(directory, "study.csv"))
    write_estimator_csv(record, os.path.join(directory, "estimators.csv"))
    if config.output.entities:
        write_entities(report, mesh, directory)
    if svg:
        eta = report.element_indicators(indicator_names(report), mesh)
        plot_indicators(mesh, eta, os.path.join(directory, "indicators.svg"), title=report.primary)
    console.print(totals_table(report, title=f"{config.scheme.name}: {mesh!r}"))


def run_study(config, directory, svg=False):
    """
    Run the study named by [study] kind and write its reports to ``directory``.

    Returns the StudyRecord, or None for a verification run.
    """
    if config.study.kind == "verify":
        run_verification(config.study.seed, config.study.checks)
        return None
    mesh = _build_mesh(config)
    case = config.build_case()
    if config.study.kind == "adaptive":
        record = adaptive_loop(mesh, config.scheme, case, config.study.max_dofs, config.study.theta,
                               config.study.tolerance, approx_degree=config.source.degree)
    else:
        record = uniform_loop(mesh, config.scheme, case, config.study.levels, config.source.degree)
    _write_record(record, directory, svg)
    return record


def study(
    config_path: Path = CONFIG_OPTION,
    out: Optional[Path] = OUT_OPTION,
    svg: Optional[bool] = SVG_OPTION,
):
    """Run the study named by [study] kind."""
    config, directory, svg = _prepare(config_path, out, svg)
    run_study(config, directory, svg)


def adapt(
    config_path: Path = CONFIG_OPTION,
    out: Optional[Path] = OUT_OPTION,
    svg: Optional[bool] = SVG_OPTION,
):
    """Adaptive loop with Dörfler marking and newest vertex bisection."""
    config, directory, svg = _prepare(config_path, out, svg)
    mesh = _build_mesh(config)
    record = adaptive_loop(mesh, config.scheme, config.build_case(), config.study.max_dofs, config.study.theta,
                           config.study.tolerance, approx_degree=config.source.degree)
    _write_record(record, directory, svg)


def cr(
    levels: int = typer.Option(4, "--levels", min=1, max=8, help="Number of uniform levels."),
    out: Path = typer.Option(Path("output"), "--out", "-o", help="Output directory."),
    svg: bool = typer.Option(False, "--svg/--no-svg", help="Write the convergence plot."),
):
    """Crouzeix-Raviart Poisson study on the unit square."""
    os.makedirs(out, exist_ok=True)
    mesh = refine_uniform(unit_square(2))
    record = cr_poisson_demo(levels, mesh)
    _write_record(record, str(out), svg)
    constants = [row.totals["jump_bound_constant"] for row in record.levels]
    logger.info("jump bound constants per level: %s", ", ".join(f"{c:.4f}" for c in constants))
