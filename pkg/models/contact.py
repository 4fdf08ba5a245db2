"""
Contact Models - colliders, barrier parameters and active pair sets
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from models.errors import ConfigError


@dataclass
class HalfPlane:
    """Obstacle {x : n . x <= offset}; the free side is n . x > offset."""
    normal: np.ndarray
    offset: float
    friction: Optional[float] = None

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        length = np.linalg.norm(normal)
        if length == 0:
            raise ConfigError("Half-plane normal must be non-zero")
        self.normal = normal / length

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal - self.offset


@dataclass
class StaticMesh:
    """Fixed obstacle surface: segments in 2D, triangles in 3D."""
    vertices: np.ndarray
    facets: np.ndarray
    friction: Optional[float] = None
    open: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.facets = np.asarray(self.facets, dtype=np.int64)
        if self.facets.size and (self.facets.min() < 0 or self.facets.max() >= len(self.vertices)):
            raise ConfigError("Static mesh facet references a missing vertex")
        if not self.open:
            self._check_watertight()

    def _check_watertight(self):
        dim = self.facets.shape[1]
        if dim == 2:
            counts = np.bincount(self.facets.ravel(), minlength=len(self.vertices))
            used = counts[np.unique(self.facets)]
            if np.any(used != 2):
                raise ConfigError("Closed 2D static mesh needs every vertex on exactly two segments (set open: true)")
        else:
            edges = np.sort(self.facets[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
            _, counts = np.unique(edges, axis=0, return_counts=True)
            if np.any(counts != 2):
                raise ConfigError("Closed static mesh must be watertight (set open: true)")


@dataclass
class BarrierParams:
    dhat: float = 1e-3      # meters
    kappa: float = 1e4
    eps_v: float = 1e-3     # m/s
    mu: float = 0.0
    self_contact: bool = False

    def __post_init__(self):
        if self.dhat <= 0 or self.kappa <= 0 or self.eps_v <= 0:
            raise ConfigError("dhat, kappa and eps_v must be positive")
        if self.mu < 0:
            raise ConfigError("Friction coefficient must be non-negative")


@dataclass(eq=False)
class ContactPairs:
    """
    Active primitive pairs. Node indices address the stacked positions
    [deformable vertices, static obstacle vertices].
    """
    plane_vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    plane_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    facets: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    plane_mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    facet_mu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_plane(self) -> int:
        return len(self.plane_vertices)

    @property
    def n_facet(self) -> int:
        return len(self.points)

    def __len__(self):
        return self.n_plane + self.n_facet

    def as_tuples(self) -> List[tuple]:
        """Sorted, hashable form used for set comparisons."""
        planes = [("plane", int(v), int(p)) for v, p in zip(self.plane_vertices, self.plane_ids)]
        facets = [("facet", int(q), tuple(int(i) for i in f)) for q, f in zip(self.points, self.facets)]
        return sorted(planes) + sorted(facets)


@dataclass(eq=False)
class FrictionLag:
    """Quantities frozen at the start of a step: pairs, normal forces, closest-point weights, tangent bases."""
    pairs: ContactPairs
    plane_force: np.ndarray   # (P_plane,)
    plane_basis: np.ndarray   # (P_plane, d, d-1)
    facet_force: np.ndarray   # (P_facet,)
    facet_weights: np.ndarray  # (P_facet, m) closest-point barycentrics
    facet_basis: np.ndarray   # (P_facet, d, d-1)
    x_lag: np.ndarray         # (n, d) positions the lag was taken at

    @property
    def is_empty(self) -> bool:
        return len(self.pairs) == 0
