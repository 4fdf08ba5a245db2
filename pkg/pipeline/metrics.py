"""
Metrics - temporal continuity, cross-level consistency and center-of-mass divergence
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import GridDependencyError
from models.grid import SolutionGrid
from models.mesh import LumpedMass
from models.prolongation import ProlongationOperator
from pipeline.integrator import LevelDynamics, incremental_potential
from pipeline.prolongation import Projection, projection

logger = logging.getLogger(__name__)

CONTINUITY_COLUMNS = ["l", "t", "e", "e_hat", "n"]
CONSISTENCY_COLUMNS = ["l", "t", "d"]
RESIDUAL_FLOOR = np.finfo(float).tiny


def force_gradient(dynamics: LevelDynamics, x_prev: np.ndarray, x: np.ndarray, step: int):
    """
    Gradient of the level's total potential (elastic, barrier, friction lagged at x_prev,
    gravity work) at x, and the free-dof index set of that step.
    """
    problem = dynamics.problem(x_prev, x, step)
    _, grad, _ = incremental_potential(problem, x, need_hessian=False)
    return grad, problem.free_dofs()


def continuity_error(grid: SolutionGrid, level: int, t: int, dynamics: LevelDynamics) -> Tuple[float, float, float]:
    """
    (e, e_hat, n) for the state at step t:

        e     = |1/2 (y^{t+1} - 2 y^t + y^{t-1}) + h^2/2 M^-1 grad F(y^{t+1})|_M^2
        e_hat = |(y^{t+1} - x_hat^t) + h^2 M^-1 grad F(y^{t+1})|_M^2
        n     = e / e_hat

    x_hat is the target the integrator used for step t+1. Dirichlet dofs are left out.
    """
    if not 1 <= t <= grid.steps - 1:
        raise GridDependencyError(f"Continuity needs 1 <= t <= {grid.steps - 1}, got {t}")
    h = grid.h
    y_prev, y, y_next = grid.x(level, t - 1), grid.x(level, t), grid.x(level, t + 1)
    grad, free = force_gradient(dynamics, y, y_next, t + 1)
    m_dof = dynamics.mass.per_dof(y.shape[1])
    accel = grad / m_dof

    stencil = 0.5 * (y_next - 2.0 * y + y_prev).ravel() + 0.5 * h ** 2 * accel
    e = float(np.sum(m_dof[free] * stencil[free] ** 2))

    x_hat = grid.cell(level, t + 1).x_tilde
    if x_hat is None:
        x_hat = y + h * grid.v(level, t)
    residual = (y_next - x_hat).ravel() + h ** 2 * accel
    e_hat = max(float(np.sum(m_dof[free] * residual[free] ** 2)), RESIDUAL_FLOOR)
    return e, e_hat, e / e_hat


def consistency_error(grid: SolutionGrid, level: int, t: int, project: Projection,
                      coarse_mass: LumpedMass) -> float:
    """d = |Pi x_l^t - x_{l-1}^t|^2 over the mass of level l-1."""
    if level < 1:
        raise GridDependencyError("Consistency is defined for levels >= 1")
    gap = project(grid.x(level, t)) - grid.x(level - 1, t)
    return float(np.sum(coarse_mass.values[:, None] * gap ** 2))


def continuity_rows(grid: SolutionGrid, levels: Sequence[LevelDynamics]) -> List[list]:
    rows = []
    for level in grid.complete_levels():
        for t in range(1, grid.steps):
            e, e_hat, n = continuity_error(grid, level, t, levels[level])
            rows.append([level, t, e, e_hat, n])
    return rows


def consistency_rows(grid: SolutionGrid, levels: Sequence[LevelDynamics],
                     operators: Sequence[ProlongationOperator]) -> List[list]:
    rows = []
    complete = set(grid.complete_levels())
    for level in range(1, grid.n_levels):
        if level not in complete or level - 1 not in complete:
            continue
        project = projection(operators[level - 1])
        for t in range(1, grid.steps + 1):
            rows.append([level, t, consistency_error(grid, level, t, project, levels[level - 1].mass)])
    return rows


def _write_csv(path: Path, columns: List[str], rows: List[list]):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, (int, np.integer)) else f"{float(v):.17g}" for v in row])


def emit_traces(grid: SolutionGrid, levels: Sequence[LevelDynamics], operators: Sequence[ProlongationOperator],
                directory) -> Dict[str, Path]:
    """Write continuity.csv and consistency.csv, rows ordered by (l, t)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"continuity": directory / "continuity.csv", "consistency": directory / "consistency.csv"}
    continuity = continuity_rows(grid, levels)
    consistency = consistency_rows(grid, levels, operators)
    _write_csv(paths["continuity"], CONTINUITY_COLUMNS, continuity)
    _write_csv(paths["consistency"], CONSISTENCY_COLUMNS, consistency)
    logger.info(f"Metric traces written: {len(continuity)} continuity rows, {len(consistency)} consistency rows")
    return paths


def read_trace(path) -> List[Dict[str, float]]:
    with open(path, "r", newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


def centers_of_mass(row: np.ndarray, mass: LumpedMass) -> np.ndarray:
    """Mass-weighted center per frame of an (N+1, n, d) row."""
    weights = mass.values / mass.total
    return np.einsum("tnd,n->td", row, weights)


def com_divergence(grid: SolutionGrid, masses: Sequence[LumpedMass]) -> Dict[int, float]:
    """Per level l >= 1: frame-averaged distance between its center of mass and level 0's."""
    if not grid.is_row_complete(0):
        return {}
    reference = centers_of_mass(grid.row(0), masses[0])
    result = {}
    for level in grid.complete_levels():
        if level == 0:
            continue
        com = centers_of_mass(grid.row(level), masses[level])
        result[level] = float(np.linalg.norm(com - reference, axis=1).mean())
    return result


def mean_divergence(divergence: Dict[int, float]) -> Optional[float]:
    return float(np.mean(list(divergence.values()))) if divergence else None
