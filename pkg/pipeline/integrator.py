"""
Integrator - implicit Euler as incremental-potential minimization by projected Newton
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.spatial.transform import Rotation

from config import settings
from models.contact import FrictionLag
from models.errors import ConfigError, InfeasibleStateError, SolverError
from models.grid import SolveReport, Trajectory
from models.mesh import LumpedMass, SimplicialMesh
from pipeline.contact import ContactModel
from pipeline.materials import ElasticEnergy

logger = logging.getLogger(__name__)

STALL_FACTOR = 100.0


@dataclass
class SolverSettings:
    newton_tol: float = settings.newton_tol     # meters
    max_iters: int = settings.max_iters
    shrink: float = settings.line_search_shrink
    armijo: float = settings.armijo
    project_psd: bool = True
    max_line_search: int = settings.max_line_search

    def __post_init__(self):
        if self.newton_tol <= 0:
            raise ConfigError(f"Newton tolerance must be positive, got {self.newton_tol}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be at least 1, got {self.max_iters}")
        if not 0.0 < self.shrink < 1.0:
            raise ConfigError(f"Line-search shrink must lie in (0, 1), got {self.shrink}")


@dataclass(eq=False)
class StepProblem:
    """One implicit-Euler step: inertia toward x_tilde plus potentials, Dirichlet vertices eliminated."""
    x_tilde: np.ndarray
    mass: LumpedMass
    h: float
    elastic: Optional[ElasticEnergy] = None
    contact: Optional[ContactModel] = None
    friction: Optional[FrictionLag] = None
    gravity: Optional[np.ndarray] = None
    dirichlet: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dirichlet_positions: Optional[np.ndarray] = None
    penalty_weight: float = 0.0
    penalty_target: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x_tilde = np.asarray(self.x_tilde, dtype=np.float64)
        n, dim = self.x_tilde.shape
        if self.h <= 0:
            raise ConfigError(f"Time step must be positive, got {self.h}")
        if len(self.mass.values) != n:
            raise ConfigError(f"Mass has {len(self.mass.values)} entries, state has {n} vertices")
        self.dirichlet = np.asarray(self.dirichlet, dtype=np.int64)
        if len(self.dirichlet) and (self.dirichlet.min() < 0 or self.dirichlet.max() >= n):
            raise ConfigError("Dirichlet index out of range")
        if self.dirichlet_positions is None:
            self.dirichlet_positions = np.zeros((len(self.dirichlet), dim))
        if self.dirichlet_positions.shape != (len(self.dirichlet), dim):
            raise ConfigError("One prescribed position per Dirichlet vertex is required")
        if self.penalty_weight < 0:
            raise ConfigError(f"Penalty weight must be non-negative, got {self.penalty_weight}")
        if self.penalty_weight > 0 and self.penalty_target is None:
            raise ConfigError("A positive penalty weight needs a target")
        self.gravity = np.zeros(dim) if self.gravity is None else np.asarray(self.gravity, dtype=np.float64)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.x_tilde.shape

    @property
    def n_dofs(self) -> int:
        return self.x_tilde.size

    def free_dofs(self) -> np.ndarray:
        n, dim = self.shape
        fixed = np.zeros((n, dim), dtype=bool)
        fixed[self.dirichlet] = True
        return np.nonzero(~fixed.ravel())[0]

    def apply_dirichlet(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=np.float64, copy=True)
        x[self.dirichlet] = self.dirichlet_positions
        return x


def incremental_potential(problem: StepProblem, x: np.ndarray, need_hessian: bool = True, project: bool = True):
    """
    (value, gradient, Hessian) of

        1/(2h^2) |x - x_tilde|_M^2 + Psi(x) + B(x) + D(x) - sum m g.x + w |x - target|_M^2

    Gradient is flat (n * d,); the Hessian is CSR or None. The value is +inf when a
    contact distance or element volume is non-positive.
    """
    x = np.asarray(x, dtype=np.float64)
    dim = x.shape[1]
    m = problem.mass.values
    m_dof = problem.mass.per_dof(dim)
    h2 = problem.h ** 2

    diff = x - problem.x_tilde
    value = 0.5 / h2 * float(np.sum(m[:, None] * diff ** 2))
    grad = m_dof * diff.ravel() / h2
    hess = sp.diags(m_dof / h2, format="csr") if need_hessian else None

    value -= float(np.sum(m[:, None] * x * problem.gravity[None, :]))
    grad = grad - np.tile(problem.gravity, len(m)) * m_dof

    if problem.penalty_weight > 0:
        w = problem.penalty_weight
        off = x - problem.penalty_target
        value += w * float(np.sum(m[:, None] * off ** 2))
        grad = grad + 2.0 * w * m_dof * off.ravel()
        if need_hessian:
            hess = hess + sp.diags(2.0 * w * m_dof, format="csr")

    if problem.elastic is not None:
        psi = problem.elastic.energy(x)
        if not np.isfinite(psi):
            return np.inf, grad, hess
        value += psi
        grad = grad + problem.elastic.gradient(x)
        if need_hessian:
            hess = hess + problem.elastic.hessian(x, project=project)

    if problem.contact is not None and problem.contact.has_obstacles:
        pairs = problem.contact.active_pairs(x)
        b, bg, bh = problem.contact.barrier_energy(x, pairs, need_hessian=need_hessian, project=project)
        if not np.isfinite(b):
            return np.inf, grad, hess
        value += b
        grad = grad + bg
        if need_hessian:
            hess = hess + bh
        if problem.friction is not None and not problem.friction.is_empty:
            f, fg, fh = problem.contact.friction_potential(x, problem.friction, problem.h, need_hessian=need_hessian)
            value += f
            grad = grad + fg
            if need_hessian:
                hess = hess + fh

    return value, grad, hess


def _value(problem: StepProblem, x: np.ndarray) -> float:
    return incremental_potential(problem, x, need_hessian=False)[0]


def newton_decrement(g_free: np.ndarray, dx_free: np.ndarray, h: float, total_mass: float) -> float:
    """h * sqrt(g^T H^-1 g / total mass), a displacement in meters."""
    return h * float(np.sqrt(max(-float(g_free @ dx_free), 0.0) / total_mass))


def solve_step(problem: StepProblem, x0: np.ndarray, solver: Optional[SolverSettings] = None) -> Tuple[np.ndarray, SolveReport]:
    """
    Minimize the incremental potential from a strictly feasible start. Every accepted
    iterate keeps contact distances positive and decreases the potential.
    """
    solver = solver or SolverSettings()
    started = time.perf_counter()
    x = problem.apply_dirichlet(x0)
    free = problem.free_dofs()
    total_mass = problem.mass.total

    energy, grad, hess = incremental_potential(problem, x, project=solver.project_psd)
    if not np.isfinite(energy):
        raise InfeasibleStateError("Newton start is not strictly feasible")

    report = SolveReport(energy_start=energy, energy_end=energy, energies=[energy])
    for iteration in range(solver.max_iters + 1):
        if not len(free):
            break
        g_free = grad[free]
        h_free = hess[free][:, free].tocsc()
        dx_free = spsolve(h_free, -g_free)
        if not np.all(np.isfinite(dx_free)) or g_free @ dx_free >= 0:
            logger.warning(f"Newton direction unusable at iteration {iteration}, using scaled gradient")
            dx_free = -g_free * problem.h ** 2 / problem.mass.per_dof(x.shape[1])[free]
        report.decrement = newton_decrement(g_free, dx_free, problem.h, total_mass)
        logger.debug(f"iter {iteration}: energy={energy:.10e} decrement={report.decrement:.3e}")
        if report.decrement <= solver.newton_tol:
            break
        if iteration == solver.max_iters:
            report.converged = False
            report.wall_time = time.perf_counter() - started
            raise SolverError(
                f"Newton did not converge in {solver.max_iters} iterations (decrement {report.decrement:.3e})",
                best_x=x, report=report,
            )

        dx = np.zeros(problem.n_dofs)
        dx[free] = dx_free
        dx = dx.reshape(x.shape)
        alpha = 1.0
        if problem.contact is not None and problem.contact.has_obstacles:
            alpha = problem.contact.feasible_step_upper_bound(x, dx)
        slope = float(grad @ dx.ravel())

        accepted = False
        for _ in range(solver.max_line_search):
            report.line_search_steps += 1
            candidate = x + alpha * dx
            trial = _value(problem, candidate)
            if np.isfinite(trial) and trial <= energy + solver.armijo * alpha * slope:
                accepted = True
                break
            alpha *= solver.shrink

        if not accepted:
            if report.decrement < STALL_FACTOR * solver.newton_tol:
                logger.warning(f"Line search stalled at decrement {report.decrement:.3e}; accepting iterate")
                report.stalled = True
                break
            report.converged = False
            report.wall_time = time.perf_counter() - started
            raise SolverError(f"Line search failed at iteration {iteration}", best_x=x, report=report)

        x = candidate
        report.iterations += 1
        report.alpha_min = min(report.alpha_min, alpha)
        energy, grad, hess = incremental_potential(problem, x, project=solver.project_psd)
        report.energies.append(energy)

    report.energy_end = energy
    if problem.contact is not None and problem.contact.has_obstacles:
        report.min_distance = problem.contact.min_distance(x)
    report.wall_time = time.perf_counter() - started
    return x, report


@dataclass(eq=False)
class DirichletRegion:
    """Vertices pinned to a rigid motion of their initial positions until `release_step`."""
    vertices: np.ndarray
    anchor: np.ndarray
    velocity: Optional[np.ndarray] = None
    angular_velocity: Optional[object] = None
    release_step: Optional[int] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        self.anchor = np.asarray(self.anchor, dtype=np.float64)
        self.centroid = self.anchor.mean(axis=0) if len(self.anchor) else np.zeros(self.anchor.shape[1])

    def active(self, step: int) -> bool:
        return self.release_step is None or step <= self.release_step

    def positions(self, elapsed: float) -> np.ndarray:
        x = self.anchor
        if self.angular_velocity is not None:
            rotation = rotation_matrix(self.angular_velocity, elapsed, self.anchor.shape[1])
            x = self.centroid + (x - self.centroid) @ rotation.T
        if self.velocity is not None:
            x = x + elapsed * np.asarray(self.velocity, dtype=np.float64)
        return x


def rotation_matrix(angular_velocity, elapsed: float, dim: int) -> np.ndarray:
    """2D takes a scalar rate, 3D an axis-angle rate vector."""
    if dim == 2:
        angle = float(np.asarray(angular_velocity).reshape(-1)[0]) * elapsed
        c, s = np.cos(angle), np.sin(angle)
        return np.array([[c, -s], [s, c]])
    return Rotation.from_rotvec(np.asarray(angular_velocity, dtype=np.float64) * elapsed).as_matrix()


@dataclass(eq=False)
class LevelDynamics:
    """Everything needed to step one level: mesh, mass, energies, obstacles and constraints."""
    mesh: SimplicialMesh
    mass: LumpedMass
    h: float
    gravity: np.ndarray
    elastic: Optional[ElasticEnergy] = None
    contact: Optional[ContactModel] = None
    dirichlet: List[DirichletRegion] = field(default_factory=list)
    solver: SolverSettings = field(default_factory=SolverSettings)
    level: int = 0

    def constraints(self, step: int) -> Tuple[np.ndarray, np.ndarray]:
        """Pinned vertices and their prescribed positions at the end of `step`."""
        dim = self.mesh.dim
        regions = [r for r in self.dirichlet if r.active(step)]
        if not regions:
            return np.zeros(0, dtype=np.int64), np.zeros((0, dim))
        return (np.concatenate([r.vertices for r in regions]),
                np.concatenate([r.positions(step * self.h) for r in regions]))

    def problem(self, x_t: np.ndarray, x_tilde: np.ndarray, step: int, penalty_weight: float = 0.0,
                penalty_target: Optional[np.ndarray] = None) -> StepProblem:
        """Step problem for advancing from x_t to step `step`; friction is lagged at x_t."""
        fixed, prescribed = self.constraints(step)
        lag = None
        if self.contact is not None and self.contact.has_obstacles:
            lag = self.contact.friction_lag(x_t)
        return StepProblem(
            x_tilde=x_tilde, mass=self.mass, h=self.h, elastic=self.elastic, contact=self.contact,
            friction=lag, gravity=self.gravity, dirichlet=fixed, dirichlet_positions=prescribed,
            penalty_weight=penalty_weight, penalty_target=penalty_target,
        )

    def step(self, x_t: np.ndarray, x_tilde: np.ndarray, step: int, penalty_weight: float = 0.0,
             penalty_target: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SolveReport]:
        problem = self.problem(x_t, x_tilde, step, penalty_weight, penalty_target)
        try:
            x_next, report = solve_step(problem, x_t, self.solver)
        except SolverError as e:
            raise SolverError(f"level {self.level}, step {step}: {e}", best_x=e.best_x, report=e.report) from e
        except InfeasibleStateError as e:
            raise InfeasibleStateError(f"level {self.level}, step {step}: {e}") from e
        logger.info(
            f"level={self.level} step={step} iterations={report.iterations} "
            f"decrement={report.decrement:.3e} alpha_min={report.alpha_min:.3e} "
            f"min_distance={report.min_distance:.3e}"
        )
        return x_next, report


def direct_rollout(dynamics: LevelDynamics, x0: np.ndarray, v0: np.ndarray, steps: int,
                   penalty_weight: float = 0.0, penalty_targets: Optional[Sequence[np.ndarray]] = None) -> Trajectory:
    """
    Standard implicit-Euler rollout with x_tilde = x^t + h v^t.

    With `penalty_targets` (one per step 1..N) each solve also pulls toward the given
    positions; this is the tracking baseline.
    """
    started = time.perf_counter()
    h = dynamics.h
    xs = [np.array(x0, dtype=np.float64, copy=True)]
    vs = [np.array(v0, dtype=np.float64, copy=True)]
    reports: List[SolveReport] = []
    targets: List[np.ndarray] = []
    for t in range(steps):
        target = penalty_targets[t] if penalty_targets is not None else None
        x_tilde = xs[t] + h * vs[t]
        x_next, report = dynamics.step(xs[t], x_tilde, t + 1, penalty_weight, target)
        vs.append((x_next - xs[t]) / h)
        xs.append(x_next)
        reports.append(report)
        targets.append(x_tilde)
    return Trajectory(np.stack(xs), np.stack(vs), reports, targets, time.perf_counter() - started)
