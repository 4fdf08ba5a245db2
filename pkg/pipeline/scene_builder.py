"""
Scene Builder - turn a validated scene into per-level dynamics, obstacles and initial states
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from models.contact import BarrierParams, HalfPlane, StaticMesh
from models.errors import ConfigError, InfeasibleStateError
from models.grid import ProgressiveConfig
from models.hierarchy import Hierarchy
from models.materials import MaterialParams
from models.prolongation import ProlongationOperator
from models.scene import HalfPlaneConfig, SceneConfig
from pipeline.contact import ContactModel
from pipeline.hierarchy import generated_hierarchy, load_manifest, validate_levels
from pipeline.integrator import DirichletRegion, LevelDynamics, SolverSettings
from pipeline.materials import ElasticEnergy, propagate_materials, region_assignment
from pipeline.mesh_io import load_surface
from pipeline.mesh_ops import extract_boundary, lumped_mass
from pipeline.prolongation import build_operators

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SceneSystem:
    """A scene resolved at every level of its hierarchy."""
    scene: SceneConfig
    hierarchy: Hierarchy
    materials: List[MaterialParams]
    assignments: List[np.ndarray]
    colliders: list
    barrier: BarrierParams
    levels: List[LevelDynamics]
    initial: List[Tuple[np.ndarray, np.ndarray]]
    config: ProgressiveConfig
    _operators: Optional[List[ProlongationOperator]] = field(default=None, repr=False)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def operators(self) -> List[ProlongationOperator]:
        """Prolongation for every adjacent level pair, built once."""
        if self._operators is None:
            kinds = self.config.kinds(self.n_levels - 1)
            self._operators = build_operators(self.hierarchy, kinds, self.config.phong_blend)
        return self._operators

    def set_operators(self, operators: List[ProlongationOperator]):
        if len(operators) != self.n_levels - 1:
            raise ConfigError(f"Expected {self.n_levels - 1} operators, got {len(operators)}")
        self._operators = list(operators)


def build_hierarchy(scene: SceneConfig, max_levels: Optional[int] = None) -> Hierarchy:
    source = scene.hierarchy
    if source.manifest is not None:
        hierarchy = load_manifest(scene.resolve(source.manifest))
    else:
        gen = source.generate
        hierarchy = generated_hierarchy(gen.shape, dict(gen.params), gen.per_level, gen.refine_levels,
                                        gen.jitter, gen.seed)
    if hierarchy.dim != scene.dim:
        raise ConfigError(f"Scene gravity is {scene.dim}D but the hierarchy is {hierarchy.dim}D")
    if max_levels is not None and max_levels < len(hierarchy):
        if max_levels < 1:
            raise ConfigError("--levels must be at least 1")
        hierarchy = validate_levels(hierarchy.levels[:max_levels], hierarchy.labels[:max_levels])
    return hierarchy


def build_colliders(scene: SceneConfig) -> list:
    colliders = []
    for spec in scene.colliders:
        if isinstance(spec, HalfPlaneConfig):
            colliders.append(HalfPlane(np.array(spec.normal), spec.offset, spec.friction))
            continue
        if spec.path is not None:
            vertices, facets = load_surface(scene.resolve(spec.path), scene.dim)
        else:
            vertices = np.asarray(spec.vertices, dtype=np.float64)
            facets = np.asarray(spec.facets, dtype=np.int64)
        vertices = vertices[:, :scene.dim] * spec.scale
        if spec.translate is not None:
            vertices = vertices + np.asarray(spec.translate, dtype=np.float64)
        colliders.append(StaticMesh(vertices, facets, spec.friction, spec.open))
    return colliders


def _spin_velocity(positions: np.ndarray, center: np.ndarray, angular_velocity) -> np.ndarray:
    r = positions - center
    if positions.shape[1] == 2:
        omega = float(np.asarray(angular_velocity).reshape(-1)[0])
        return omega * np.stack([-r[:, 1], r[:, 0]], axis=1)
    return np.cross(np.asarray(angular_velocity, dtype=np.float64), r)


def initial_state(scene: SceneConfig, rest: np.ndarray, masses: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """x0 = rest + translate; v0 = velocity + spin about the level's center of mass."""
    spec = scene.initial
    x0 = np.array(rest, dtype=np.float64, copy=True)
    if spec.translate is not None:
        x0 += np.asarray(spec.translate, dtype=np.float64)
    v0 = np.zeros_like(x0)
    if spec.velocity is not None:
        v0 += np.asarray(spec.velocity, dtype=np.float64)
    if spec.angular_velocity is not None:
        center = (masses[:, None] * x0).sum(axis=0) / masses.sum()
        v0 += _spin_velocity(x0, center, spec.angular_velocity)
    return x0, v0


def dirichlet_regions(scene: SceneConfig, rest: np.ndarray, x0: np.ndarray, level: int) -> List[DirichletRegion]:
    """Each region pins the vertices whose rest positions fall inside its box."""
    regions = []
    for i, spec in enumerate(scene.dirichlet):
        lower, upper = np.asarray(spec.box.lower), np.asarray(spec.box.upper)
        inside = np.nonzero(np.all((rest >= lower) & (rest <= upper), axis=1))[0]
        if not len(inside):
            logger.warning(f"Dirichlet region {i} selects no vertices at level {level}")
            continue
        regions.append(DirichletRegion(
            vertices=inside,
            anchor=x0[inside],
            velocity=None if spec.velocity is None else np.asarray(spec.velocity, dtype=np.float64),
            angular_velocity=spec.angular_velocity,
            release_step=spec.release_step,
        ))
    return regions


def build_scene(scene: SceneConfig, max_levels: Optional[int] = None) -> SceneSystem:
    hierarchy = build_hierarchy(scene, max_levels)
    names = scene.material_names()
    materials = [MaterialParams(m.model, m.young, m.poisson, m.density) for m in scene.materials.values()]
    boxes = [(names.index(rule.material), np.asarray(rule.box.lower), np.asarray(rule.box.upper))
             for rule in scene.assignment]
    assignments = propagate_materials(hierarchy, region_assignment(hierarchy[0], boxes))
    colliders = build_colliders(scene)
    barrier = BarrierParams(
        dhat=scene.barrier.dhat, kappa=scene.barrier.kappa, eps_v=scene.friction.eps_v,
        mu=scene.friction.mu, self_contact=scene.barrier.self_contact,
    )
    solver = SolverSettings(
        newton_tol=scene.solver.newton_tol, max_iters=scene.solver.max_iters, shrink=scene.solver.shrink,
        armijo=scene.solver.armijo, project_psd=scene.solver.project_psd,
        max_line_search=scene.solver.max_line_search,
    )
    densities = np.array([m.density for m in materials])
    gravity = np.asarray(scene.gravity, dtype=np.float64)

    levels, initial = [], []
    for level, mesh in enumerate(hierarchy.levels):
        mass = lumped_mass(mesh, densities[assignments[level]])
        x0, v0 = initial_state(scene, mesh.rest_positions, mass.values)
        contact = None
        if colliders or barrier.self_contact:
            contact = ContactModel(mesh, extract_boundary(mesh), colliders, barrier)
            gap = contact.min_distance(x0)
            if gap <= 0:
                raise InfeasibleStateError(f"Level {level} starts in contact (distance {gap:.3e})")
        levels.append(LevelDynamics(
            mesh=mesh, mass=mass, h=scene.time.h, gravity=gravity,
            elastic=ElasticEnergy(mesh, materials, assignments[level]),
            contact=contact,
            dirichlet=dirichlet_regions(scene, mesh.rest_positions, x0, level),
            solver=solver, level=level,
        ))
        initial.append((x0, v0))

    config = ProgressiveConfig(
        h=scene.time.h, steps=scene.time.steps, w=scene.progressive.w,
        kind=scene.progressive.kind, phong_blend=scene.progressive.phong_blend,
        pair_kinds=scene.progressive.pair_kinds,
    )
    config.kinds(len(levels) - 1)  # raises when pair_kinds misses a level pair
    logger.info(f"Scene '{scene.name}' built: {len(levels)} levels, {len(colliders)} collider(s)")
    return SceneSystem(scene, hierarchy, materials, assignments, colliders, barrier, levels, initial, config)
