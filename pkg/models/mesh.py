"""
Mesh Models - rest geometry, boundary, mass and adjacency of one level
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import scipy.sparse as sp

from models.errors import MeshError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(eq=False)
class SimplicialMesh:
    """Triangles (dim=2) or tetrahedra (dim=3) in their rest configuration."""
    dim: int
    rest_positions: np.ndarray  # (n, dim) meters
    elements: np.ndarray        # (m, dim + 1) vertex indices
    level_id: int = 0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise MeshError(f"Unsupported dimension {self.dim}")
        positions = np.asarray(self.rest_positions, dtype=np.float64)
        elements = np.asarray(self.elements, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[1] != self.dim:
            raise MeshError(f"Positions must have shape (n, {self.dim}), got {positions.shape}")
        if elements.ndim != 2 or elements.shape[1] != self.dim + 1:
            raise MeshError(f"Elements must have shape (m, {self.dim + 1}), got {elements.shape}")
        if elements.size and (elements.min() < 0 or elements.max() >= len(positions)):
            bad = int(np.nonzero((elements < 0).any(axis=1) | (elements >= len(positions)).any(axis=1))[0][0])
            raise MeshError(f"Element {bad} references a vertex out of range", element=bad)
        if not np.all(np.isfinite(positions)):
            raise MeshError("Rest positions contain non-finite values")
        keys = np.sort(elements, axis=1)
        if len(np.unique(keys, axis=0)) != len(keys):
            raise MeshError("Mesh contains duplicate elements")
        self.rest_positions = _frozen(positions)
        self.elements = _frozen(elements)

    @property
    def n_vertices(self) -> int:
        return len(self.rest_positions)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def nodes_per_element(self) -> int:
        return self.dim + 1

    def bbox(self):
        return self.rest_positions.min(axis=0), self.rest_positions.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def to_dict(self):
        lo, hi = self.bbox()
        return {
            "dim": self.dim,
            "level_id": self.level_id,
            "vertices": self.n_vertices,
            "elements": self.n_elements,
            "bbox_min": lo.tolist(),
            "bbox_max": hi.tolist(),
        }


@dataclass(eq=False)
class BoundarySurface:
    """Outward-oriented boundary facets: edges in 2D, triangles in 3D."""
    facets: np.ndarray          # (k, dim) vertex indices
    parent_elements: np.ndarray  # (k,) element owning each facet

    def __post_init__(self):
        self.facets = _frozen(np.asarray(self.facets, dtype=np.int64))
        self.parent_elements = _frozen(np.asarray(self.parent_elements, dtype=np.int64))

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def vertices(self) -> np.ndarray:
        """Sorted indices of vertices touching the boundary."""
        return np.unique(self.facets)

    def to_dict(self):
        return {"facets": self.n_facets, "boundary_vertices": int(len(self.vertices))}


@dataclass(eq=False)
class LumpedMass:
    """Diagonal mass, one entry per vertex, kilograms."""
    values: np.ndarray

    def __post_init__(self):
        self.values = _frozen(np.asarray(self.values, dtype=np.float64))

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def per_dof(self, dim: int) -> np.ndarray:
        """Mass repeated per coordinate, matching a flattened (n * dim) vector."""
        return np.repeat(self.values, dim)


@dataclass(eq=False)
class MeshAdjacency:
    """Connectivity graphs as sparse boolean matrices."""
    vertex_vertex: sp.csr_matrix
    element_element: sp.csr_matrix
    vertex_elements: sp.csr_matrix  # (n_vertices, n_elements) incidence
    extra: Dict[str, object] = field(default_factory=dict)

    def vertex_neighbors(self, vertex: int) -> np.ndarray:
        row = self.vertex_vertex
        return row.indices[row.indptr[vertex]:row.indptr[vertex + 1]]

    def element_neighbors(self, element: int) -> np.ndarray:
        row = self.element_element
        return row.indices[row.indptr[element]:row.indptr[element + 1]]

    def elements_of_vertex(self, vertex: int) -> np.ndarray:
        row = self.vertex_elements
        return row.indices[row.indptr[vertex]:row.indptr[vertex + 1]]
