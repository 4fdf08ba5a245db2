"""
Progressive - solution-grid orchestration: coarsest rollout, prolonged velocity updates
and the tracking / embedded baselines
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Union

import numpy as np
import scipy.sparse as sp

from models.errors import GridDependencyError, ProlongationError
from models.grid import SolutionGrid, Trajectory
from models.prolongation import ProlongationOperator
from pipeline.integrator import direct_rollout
from pipeline.scene_builder import SceneSystem

logger = logging.getLogger(__name__)

Operator = Union[ProlongationOperator, sp.spmatrix, np.ndarray]


def _weights(operator: Operator):
    return operator.weights if isinstance(operator, ProlongationOperator) else operator


def apply_operator(operator: Operator, coarse: np.ndarray) -> np.ndarray:
    """P applied per coordinate to an (n_coarse, d) field."""
    P = _weights(operator)
    if P.shape[1] != coarse.shape[0]:
        raise ProlongationError(f"Operator has {P.shape[1]} columns, field has {coarse.shape[0]} rows")
    return np.asarray(P @ coarse)


def new_grid(system: SceneSystem, steps: Optional[int] = None) -> SolutionGrid:
    steps = system.config.steps if steps is None else steps
    grid = SolutionGrid(system.n_levels, steps, system.config.h)
    for level, (x0, v0) in enumerate(system.initial):
        grid.set_initial(level, x0, v0)
    return grid


def run_coarsest(system: SceneSystem, grid: Optional[SolutionGrid] = None) -> SolutionGrid:
    """Fill row 0 with a direct rollout of level 0."""
    grid = grid or new_grid(system)
    started = time.perf_counter()
    dynamics = system.levels[0]
    for t in range(grid.steps):
        x_t, v_t = grid.x(0, t), grid.v(0, t)
        x_tilde = x_t + grid.h * v_t
        x_next, report = dynamics.step(x_t, x_tilde, t + 1)
        grid.set(0, t + 1, x_next, report, x_tilde)
    grid.row_times[0] = time.perf_counter() - started
    logger.info(f"Row 0 finished: {grid.steps} steps in {grid.row_times[0]:.3f}s")
    return grid


def velpro_target(x_fine_t: np.ndarray, operator: Operator, x_coarse_t: np.ndarray,
                  x_coarse_tm1: np.ndarray) -> np.ndarray:
    """x_hat = x_fine_t + P (x_coarse_t - x_coarse_tm1)."""
    if x_coarse_t.shape != x_coarse_tm1.shape:
        raise ProlongationError("Coarse states at t and t-1 differ in shape")
    update = apply_operator(operator, x_coarse_t - x_coarse_tm1)
    if update.shape != x_fine_t.shape:
        raise ProlongationError(f"Prolonged update has shape {update.shape}, fine state {x_fine_t.shape}")
    return x_fine_t + update


def _coarse_previous(grid: SolutionGrid, level: int, t: int) -> np.ndarray:
    """x_l^{t-1}; before the first step this is x_l^0 - h v_l^0."""
    if t >= 1:
        return grid.x(level, t - 1)
    return grid.x(level, 0) - grid.h * grid.v(level, 0)


def advance_level(grid: SolutionGrid, level: int, system: SceneSystem, w: Optional[float] = None,
                  operator: Optional[Operator] = None) -> SolutionGrid:
    """Fill row `level` from row `level - 1` with prolonged velocity targets and the optional penalty."""
    if level < 1:
        raise GridDependencyError("advance_level needs level >= 1; use run_coarsest for row 0")
    if not grid.is_row_complete(level - 1):
        raise GridDependencyError(f"Row {level - 1} must be complete before row {level}")
    w = system.config.w if w is None else w
    operator = system.operators()[level - 1] if operator is None else operator
    dynamics = system.levels[level]
    started = time.perf_counter()
    for t in range(grid.steps):
        x_t = grid.x(level, t)
        x_hat = velpro_target(x_t, operator, grid.x(level - 1, t), _coarse_previous(grid, level - 1, t))
        target = apply_operator(operator, grid.x(level - 1, t + 1)) if w > 0 else None
        x_next, report = dynamics.step(x_t, x_hat, t + 1, w, target)
        grid.set(level, t + 1, x_next, report, x_hat)
    grid.row_times[level] = time.perf_counter() - started
    logger.info(f"Row {level} finished: {grid.steps} steps in {grid.row_times[level]:.3f}s")
    return grid


def run_progressive(system: SceneSystem, w: Optional[float] = None) -> SolutionGrid:
    """Whole grid, one row at a time, coarsest first."""
    grid = run_coarsest(system)
    for level in range(1, system.n_levels):
        advance_level(grid, level, system, w)
    return grid


def run_direct_levels(system: SceneSystem, workers: int = 1) -> SolutionGrid:
    """Independent direct rollouts of every level, optionally in parallel threads."""
    steps = system.config.steps

    def rollout(level: int) -> Trajectory:
        x0, v0 = system.initial[level]
        return direct_rollout(system.levels[level], x0, v0, steps)

    if workers > 1 and system.n_levels > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(rollout, range(system.n_levels)))
    else:
        trajectories = [rollout(level) for level in range(system.n_levels)]
    return _grid_from_trajectories(system, trajectories)


def _grid_from_trajectories(system: SceneSystem, trajectories: List[Trajectory]) -> SolutionGrid:
    grid = SolutionGrid.from_rows(
        [t.positions for t in trajectories], system.config.h, [t.velocities[0] for t in trajectories],
        reports=[t.reports for t in trajectories], targets=[t.targets for t in trajectories],
    )
    for level, trajectory in enumerate(trajectories):
        grid.row_times[level] = trajectory.wall_time
    return grid


def run_tracks_baseline(system: SceneSystem, coarse_row: np.ndarray, level: int = 1,
                        w: Optional[float] = None, operator: Optional[Operator] = None) -> Trajectory:
    """
    Direct rollout of `level` with the standard momentum update, pulled toward the
    prolonged states of the level below by w |x - P x_coarse^{t+1}|_M^2.
    """
    w = system.config.w if w is None else w
    operator = system.operators()[level - 1] if operator is None else operator
    steps = len(coarse_row) - 1
    targets = [apply_operator(operator, coarse_row[t + 1]) for t in range(steps)]
    x0, v0 = system.initial[level]
    return direct_rollout(system.levels[level], x0, v0, steps, w, targets if w > 0 else None)


def run_tracks(system: SceneSystem, w: Optional[float] = None) -> SolutionGrid:
    """Level 0 directly, then every finer level tracks the level below it."""
    x0, v0 = system.initial[0]
    trajectories = [direct_rollout(system.levels[0], x0, v0, system.config.steps)]
    for level in range(1, system.n_levels):
        trajectories.append(run_tracks_baseline(system, trajectories[-1].positions, level, w))
    return _grid_from_trajectories(system, trajectories)


def run_embedded_baseline(coarse_row: np.ndarray, operator: Operator) -> np.ndarray:
    """x_fine^t = P x_coarse^t for every frame; no solve."""
    return np.stack([apply_operator(operator, frame) for frame in coarse_row])


def run_embedded(system: SceneSystem) -> SolutionGrid:
    """Level 0 directly; finer levels are prolonged copies through the operator chain."""
    x0, v0 = system.initial[0]
    base = direct_rollout(system.levels[0], x0, v0, system.config.steps)
    rows, velocities = [base.positions], [base.velocities[0]]
    for level in range(1, system.n_levels):
        operator = system.operators()[level - 1]
        rows.append(run_embedded_baseline(rows[-1], operator))
        velocities.append(apply_operator(operator, velocities[-1]))
    empty = [[None] * system.config.steps for _ in range(system.n_levels - 1)]
    grid = SolutionGrid.from_rows(rows, system.config.h, velocities,
                                  reports=[base.reports] + empty, targets=[base.targets] + empty)
    grid.row_times[0] = base.wall_time
    return grid
