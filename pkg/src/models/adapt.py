"""
Adaptive and uniform refinement studies.

The adaptive loop is solve -> estimate -> mark (Dörfler) -> refine (newest
vertex bisection) until the dof budget or the estimator tolerance is hit.
"""

import logging
import time
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.models.assembly import solve
from src.models.errors import ConfigError, PlateError
from src.models.estimate import edge_to_elements, energy_error, indicator_names, scheme_total
from src.models.mesh import refine_bisect, refine_uniform

logger = logging.getLogger(__name__)

STUDY_COLUMNS = ["level", "ndof", "hmax", "err_energy", "estA", "estB", "est_theorem", "osc", "apx", "eff_index"]


@dataclass
class LevelRecord:
    level: int
    ndof: int
    hmax: float
    err_energy: Optional[float]
    estA: float
    estB: float
    est_theorem: float
    osc: float
    apx: float
    eff_index: Optional[float]
    wall_time: float
    num_triangles: int = 0
    marked: int = 0
    totals: Dict[str, float] = field(default_factory=dict)


@dataclass
class StudyRecord:
    """Per-level summary of a refinement study."""

    scheme: str
    kind: str
    levels: List[LevelRecord] = field(default_factory=list)
    solutions: list = field(default_factory=list, repr=False)
    reports: list = field(default_factory=list, repr=False)

    def append(self, record, solution=None, report=None):
        if self.levels and record.ndof <= self.levels[-1].ndof:
            raise PlateError(f"dof count did not increase at level {record.level}", stage="refine")
        self.levels.append(record)
        self.solutions.append(solution)
        self.reports.append(report)

    def column(self, name):
        return np.array([getattr(level, name) if getattr(level, name) is not None else np.nan
                         for level in self.levels], dtype=float)

    def to_frame(self):
        rows = []
        for level in self.levels:
            row = asdict(level)
            rows.append({key: row[key] for key in STUDY_COLUMNS})
        return pd.DataFrame(rows, columns=STUDY_COLUMNS)


# ---------------------------------------------------------------------- #
# marking
# ---------------------------------------------------------------------- #
def mark_doerfler(indicators, theta=0.5, mesh=None, edge_indicators=None):
    """
    Minimal set of elements carrying a θ-fraction of the squared estimator.

    Args:
        indicators: squared element indicators η_T²
        theta: bulk parameter in (0, 1]
        mesh: required when ``edge_indicators`` are given
        edge_indicators: squared edge indicators, split in halves onto the
            adjacent elements

    Returns:
        sorted element ids; empty when all indicators vanish
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigError(f"bulk parameter must lie in (0, 1], got {theta}", field="study.theta")
    eta = np.asarray(indicators, dtype=float).copy()
    if edge_indicators is not None:
        eta += edge_to_elements(mesh, edge_indicators)
    if eta.size == 0:
        raise ConfigError("no indicators to mark from", field="study")
    total = eta.sum()
    if total <= 0.0:
        logger.warning("all indicators vanish; nothing is marked")
        return np.zeros(0, dtype=np.int64)
    if theta >= 1.0:
        return np.flatnonzero(eta > 0.0)
    order = np.argsort(-eta, kind="stable")
    cumulative = np.cumsum(eta[order])
    count = int(np.searchsorted(cumulative, theta * total * (1.0 - 1e-12))) + 1
    return np.sort(order[:count])


# ---------------------------------------------------------------------- #
# loops
# ---------------------------------------------------------------------- #
def solve_and_estimate(mesh, config, case, approx_degree=2, level=0):
    """Solve one level and evaluate its estimators; returns (u_h, report, LevelRecord)."""
    start = time.perf_counter()
    try:
        u_h = solve(mesh, config, case.source)
    except PlateError as exc:
        raise exc.with_stage(exc.stage or "solve")
    try:
        report = scheme_total(u_h, case.source, config, degree=approx_degree)
    except PlateError as exc:
        raise exc.with_stage(exc.stage or "estimate")
    err = energy_error(u_h, case.exact).h if case.exact is not None else None
    theorem = report.totals[report.primary]
    record = LevelRecord(
        level=level,
        ndof=u_h.dofmap.ndof,
        hmax=mesh.hmax,
        err_energy=err,
        estA=report.totals["A"],
        estB=report.totals["B"],
        est_theorem=theorem,
        osc=report.totals.get("osc", 0.0),
        apx=report.totals.get("apx", 0.0),
        eff_index=theorem / err if err else None,
        wall_time=time.perf_counter() - start,
        num_triangles=mesh.num_triangles,
        totals=dict(report.totals),
    )
    logger.info("level %d: ndof=%d hmax=%.3e estimator=%.4e error=%s (%.2fs)", level, record.ndof,
                record.hmax, theorem, f"{err:.4e}" if err is not None else "n/a", record.wall_time)
    return u_h, report, record


def uniform_loop(mesh, config, case, levels, approx_degree=2):
    """Solve on ``mesh`` and ``levels - 1`` successive red refinements."""
    record = StudyRecord(config.name, "uniform")
    for level in range(levels):
        if level:
            mesh = refine_uniform(mesh)
        u_h, report, row = solve_and_estimate(mesh, config, case, approx_degree, level)
        record.append(row, u_h, report)
    return record


def adaptive_loop(mesh, config, case, max_dofs, theta=0.5, tolerance=1e-8, max_levels=40, approx_degree=2):
    """
    Adaptive refinement driven by the primary estimator of the scheme.

    Stops when the estimator drops to ``tolerance``, when the dof count
    reaches ``max_dofs`` or after ``max_levels`` levels.
    """
    record = StudyRecord(config.name, "adaptive")
    level = 0
    while True:
        u_h, report, row = solve_and_estimate(mesh, config, case, approx_degree, level)
        estimator = row.est_theorem
        if estimator <= tolerance or row.ndof >= max_dofs or level + 1 >= max_levels:
            record.append(row, u_h, report)
            break
        eta = report.element_indicators(indicator_names(report), mesh)
        try:
            marked = mark_doerfler(eta, theta)
        except PlateError as exc:
            raise exc.with_stage("mark")
        row.marked = len(marked)
        record.append(row, u_h, report)
        if len(marked) == 0:
            break
        try:
            mesh = refine_bisect(mesh, marked)
        except PlateError as exc:
            raise exc.with_stage("refine")
        level += 1
    return record
