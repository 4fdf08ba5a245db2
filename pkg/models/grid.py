"""
Solution Grid Models - per-(level, step) states, solve reports and run configuration
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import ConfigError, GridDependencyError
from models.prolongation import ProlongationKind


@dataclass
class SolveReport:
    """Outcome of one Newton solve."""
    iterations: int = 0
    decrement: float = 0.0
    line_search_steps: int = 0
    alpha_min: float = 1.0
    min_distance: float = float("inf")
    energy_start: float = 0.0
    energy_end: float = 0.0
    converged: bool = True
    stalled: bool = False
    wall_time: float = 0.0
    energies: List[float] = field(default_factory=list)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "decrement": self.decrement,
            "line_search_steps": self.line_search_steps,
            "alpha_min": self.alpha_min,
            "min_distance": None if not np.isfinite(self.min_distance) else self.min_distance,
            "energy_start": self.energy_start,
            "energy_end": self.energy_end,
            "converged": self.converged,
            "stalled": self.stalled,
            "wall_time": self.wall_time,
        }


@dataclass(eq=False)
class GridCell:
    x: np.ndarray
    v: np.ndarray
    report: Optional[SolveReport] = None
    x_tilde: Optional[np.ndarray] = None  # integrator target that produced x


@dataclass
class ProgressiveConfig:
    h: float
    steps: int
    w: float = 0.0
    kind: ProlongationKind = ProlongationKind.BARYCENTRIC
    phong_blend: float = 0.5
    pair_kinds: Optional[List[ProlongationKind]] = None

    def __post_init__(self):
        if self.h <= 0:
            raise ConfigError(f"Time step must be positive, got {self.h}")
        if self.steps < 0:
            raise ConfigError(f"Step count must be non-negative, got {self.steps}")
        if self.w < 0:
            raise ConfigError(f"Consistency penalty weight must be non-negative, got {self.w}")
        if not 0.0 <= self.phong_blend <= 1.0:
            raise ConfigError(f"Phong blend must lie in [0, 1], got {self.phong_blend}")
        self.kind = ProlongationKind.parse(self.kind)
        if self.pair_kinds is not None:
            self.pair_kinds = [ProlongationKind.parse(k) for k in self.pair_kinds]

    def kind_for_pair(self, pair: int) -> ProlongationKind:
        """Kind of the operator between levels `pair` and `pair + 1`."""
        if self.pair_kinds is None:
            return self.kind
        if not 0 <= pair < len(self.pair_kinds):
            raise ConfigError(f"No prolongation kind for level pair {pair}; pair_kinds has {len(self.pair_kinds)}")
        return self.pair_kinds[pair]

    def kinds(self, n_pairs: int) -> List[ProlongationKind]:
        return [self.kind_for_pair(pair) for pair in range(n_pairs)]


class SolutionGrid:
    """
    States x[l][t], v[l][t] for levels 0..L and steps 0..N.

    Writes are checked against the progressive dependency structure: a cell at
    step t >= 1 needs its own predecessor (l, t-1), and every row above 0 needs the
    row below it complete. Filled cells are never overwritten.
    """

    def __init__(self, n_levels: int, steps: int, h: float):
        if n_levels < 1:
            raise ConfigError("A solution grid needs at least one level")
        self.n_levels = n_levels
        self.steps = steps
        self.h = h
        self._cells: Dict[Tuple[int, int], GridCell] = {}
        self.row_times: Dict[int, float] = {}

    def has(self, level: int, t: int) -> bool:
        return (level, t) in self._cells

    def is_row_complete(self, level: int) -> bool:
        return all(self.has(level, t) for t in range(self.steps + 1))

    def _check_bounds(self, level: int, t: int):
        if not 0 <= level < self.n_levels or not 0 <= t <= self.steps:
            raise GridDependencyError(f"Cell ({level}, {t}) is outside a {self.n_levels}x{self.steps + 1} grid")

    def set_initial(self, level: int, x: np.ndarray, v: np.ndarray):
        self._check_bounds(level, 0)
        if self.has(level, 0):
            raise GridDependencyError(f"Cell ({level}, 0) already filled")
        self._cells[(level, 0)] = GridCell(np.array(x, copy=True), np.array(v, copy=True))

    def set(self, level: int, t: int, x: np.ndarray, report: Optional[SolveReport] = None,
            x_tilde: Optional[np.ndarray] = None):
        """Store x at (level, t >= 1); the velocity follows from the implicit-Euler identity."""
        self._check_bounds(level, t)
        if t == 0:
            raise GridDependencyError("Use set_initial for step 0")
        if self.has(level, t):
            raise GridDependencyError(f"Cell ({level}, {t}) already filled")
        if not self.has(level, t - 1):
            raise GridDependencyError(f"Cell ({level}, {t}) written before ({level}, {t - 1})")
        if level > 0 and not self.is_row_complete(level - 1):
            raise GridDependencyError(f"Cell ({level}, {t}) written before row {level - 1} was complete")
        x = np.array(x, copy=True)
        v = (x - self._cells[(level, t - 1)].x) / self.h
        self._cells[(level, t)] = GridCell(x, v, report, x_tilde)

    def cell(self, level: int, t: int) -> GridCell:
        if not self.has(level, t):
            raise GridDependencyError(f"Cell ({level}, {t}) has not been computed")
        return self._cells[(level, t)]

    def x(self, level: int, t: int) -> np.ndarray:
        return self.cell(level, t).x

    def v(self, level: int, t: int) -> np.ndarray:
        return self.cell(level, t).v

    def report(self, level: int, t: int) -> Optional[SolveReport]:
        return self.cell(level, t).report

    def row(self, level: int) -> np.ndarray:
        """Positions of a complete row, shape (N+1, n, d)."""
        if not self.is_row_complete(level):
            raise GridDependencyError(f"Row {level} is incomplete")
        return np.stack([self._cells[(level, t)].x for t in range(self.steps + 1)])

    def reports(self, level: int) -> List[Optional[SolveReport]]:
        return [self._cells[(level, t)].report for t in range(1, self.steps + 1) if self.has(level, t)]

    def complete_levels(self) -> List[int]:
        return [level for level in range(self.n_levels) if self.is_row_complete(level)]

    @classmethod
    def from_rows(cls, rows: Sequence[np.ndarray], h: float, initial_velocities: Sequence[np.ndarray],
                  reports: Optional[Sequence[Sequence[SolveReport]]] = None,
                  targets: Optional[Sequence[Sequence[np.ndarray]]] = None) -> "SolutionGrid":
        """Grid from complete position rows (N+1, n, d) per level, filled coarsest first."""
        steps = len(rows[0]) - 1
        grid = cls(len(rows), steps, h)
        for level, (row, v0) in enumerate(zip(rows, initial_velocities)):
            if len(row) != steps + 1:
                raise GridDependencyError(f"Row {level} has {len(row)} frames, expected {steps + 1}")
            grid.set_initial(level, row[0], v0)
            for t in range(1, steps + 1):
                report = reports[level][t - 1] if reports is not None else None
                x_tilde = targets[level][t - 1] if targets is not None else None
                grid.set(level, t, row[t], report, x_tilde)
        return grid


@dataclass(eq=False)
class Trajectory:
    """One level's rollout: positions and velocities (N+1, n, d), plus per-step reports and targets."""
    positions: np.ndarray
    velocities: np.ndarray
    reports: List[SolveReport] = field(default_factory=list)
    targets: List[np.ndarray] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.positions) - 1
