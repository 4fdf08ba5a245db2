"""
Materials - elastic energy assembly and cross-level material propagation
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from adapters import get_model
from models.errors import MaterialError
from models.hierarchy import Hierarchy
from models.materials import ElementRestData, MaterialParams, lame_from_young_poisson
from models.mesh import SimplicialMesh
from pipeline.assembly import project_psd, scatter_gradient, scatter_hessian
from pipeline.binding import barycentric_batch
from pipeline.mesh_ops import basis_gradients, element_centroids, rest_volumes
from pipeline.spatial import AABBTree

logger = logging.getLogger(__name__)

__all__ = ["lame_from_young_poisson", "rest_data", "ElasticEnergy", "propagate_materials"]


def rest_data(mesh: SimplicialMesh, assignment: Optional[np.ndarray] = None) -> ElementRestData:
    grads, dm_inv = basis_gradients(mesh)
    assignment = np.zeros(mesh.n_elements, dtype=np.int64) if assignment is None else np.asarray(assignment)
    if assignment.shape != (mesh.n_elements,):
        raise MaterialError(f"Assignment covers {assignment.shape} elements, mesh has {mesh.n_elements}")
    return ElementRestData(dm_inv=dm_inv, volume=rest_volumes(mesh), material_id=assignment, grads=grads)


class ElasticEnergy:
    """
    Psi(x) = sum_e vol_e psi(F_e) with F_e = sum_a x_{e_a} grad(phi_a)^T.

    Elements are grouped by material model; sums run in element order.
    """

    def __init__(self, mesh: SimplicialMesh, materials: Sequence[MaterialParams],
                 assignment: Optional[np.ndarray] = None):
        if not materials:
            raise MaterialError("At least one material is required")
        self.mesh = mesh
        self.materials = list(materials)
        self.rest = rest_data(mesh, assignment)
        if self.rest.material_id.max() >= len(self.materials) or self.rest.material_id.min() < 0:
            raise MaterialError("Assignment refers to an unknown material")
        lame = np.array([m.lame for m in self.materials])
        self.mu = lame[self.rest.material_id, 0]
        self.lam = lame[self.rest.material_id, 1]
        kinds = np.array([m.model.value for m in self.materials])[self.rest.material_id]
        self.groups = [(get_model(kind), np.nonzero(kinds == kind)[0]) for kind in sorted(set(kinds))]

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices * self.mesh.dim

    def deformation_gradients(self, x: np.ndarray) -> np.ndarray:
        corners = x[self.mesh.elements]  # (m, k, d)
        return np.einsum("mai,maj->mij", corners, self.rest.grads)

    def energy(self, x: np.ndarray) -> float:
        F = self.deformation_gradients(x)
        total = np.zeros(self.mesh.n_elements)
        for model, idx in self.groups:
            total[idx] = model.energy_density(F[idx], self.mu[idx], self.lam[idx])
        return float(np.sum(self.rest.volume * total))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Flat (n * d,) gradient."""
        F = self.deformation_gradients(x)
        local = np.zeros((self.mesh.n_elements, self.mesh.dim + 1, self.mesh.dim))
        for model, idx in self.groups:
            P = model.first_piola(F[idx], self.mu[idx], self.lam[idx])
            local[idx] = self.rest.volume[idx, None, None] * np.einsum("mij,maj->mai", P, self.rest.grads[idx])
        return scatter_gradient(self.mesh.elements, local.reshape(self.mesh.n_elements, -1), self.n_dofs)

    def local_hessians(self, x: np.ndarray, project: bool = True) -> np.ndarray:
        F = self.deformation_gradients(x)
        k, d = self.mesh.dim + 1, self.mesh.dim
        local = np.zeros((self.mesh.n_elements, k * d, k * d))
        for model, idx in self.groups:
            dP = model.piola_derivative(F[idx], self.mu[idx], self.lam[idx])
            G = self.rest.grads[idx]
            block = np.einsum("mijkl,maj,mbl->maibk", dP, G, G)
            local[idx] = self.rest.volume[idx, None, None] * block.reshape(len(idx), k * d, k * d)
        return project_psd(local) if project else local

    def hessian(self, x: np.ndarray, project: bool = True) -> sp.csr_matrix:
        return scatter_hessian(self.mesh.elements, self.local_hessians(x, project), self.n_dofs)

    def min_jacobian(self, x: np.ndarray) -> float:
        return float(np.linalg.det(self.deformation_gradients(x)).min())


def propagate_materials(hierarchy: Hierarchy, coarse_assignment: np.ndarray) -> List[np.ndarray]:
    """
    Material id per element at every level: each element takes the id of the level-0
    element containing its rest centroid, else of the level-0 element with the nearest centroid.
    """
    coarse = hierarchy[0]
    coarse_assignment = np.asarray(coarse_assignment, dtype=np.int64)
    if coarse_assignment.shape != (coarse.n_elements,):
        raise MaterialError(
            f"Level-0 assignment has {coarse_assignment.shape[0]} entries, mesh has {coarse.n_elements} elements"
        )
    tree = AABBTree.from_simplices(coarse.rest_positions, coarse.elements)
    coarse_centroids = element_centroids(coarse)
    result = [coarse_assignment.copy()]
    for level in range(1, len(hierarchy)):
        centroids = element_centroids(hierarchy[level])
        hosts = _host_elements(coarse, tree, coarse_centroids, centroids)
        result.append(coarse_assignment[hosts])
    return result


def _host_elements(coarse: SimplicialMesh, tree: AABBTree, coarse_centroids: np.ndarray,
                   points: np.ndarray) -> np.ndarray:
    hosts = np.full(len(points), -1, dtype=np.int64)
    queries, candidates = tree.query_points(points, 1e-12 * max(coarse.bbox_diagonal(), 1.0))
    if len(queries):
        weights = barycentric_batch(coarse, candidates, points[queries])
        inside = weights.min(axis=1) >= -1e-10
        queries, candidates = queries[inside], candidates[inside]
        first = np.unique(queries, return_index=True)[1]
        hosts[queries[first]] = candidates[first]
    outside = np.nonzero(hosts < 0)[0]
    if len(outside):
        hosts[outside] = cKDTree(coarse_centroids).query(points[outside])[1]
    return hosts


def region_assignment(mesh: SimplicialMesh, boxes: Sequence[Tuple[int, np.ndarray, np.ndarray]]) -> np.ndarray:
    """
    Material id per element from ordered (material_id, lower, upper) boxes tested on element
    centroids; later boxes override earlier ones, uncovered elements keep id 0.
    """
    centroids = element_centroids(mesh)
    assignment = np.zeros(mesh.n_elements, dtype=np.int64)
    for material_id, lower, upper in boxes:
        inside = np.all((centroids >= lower) & (centroids <= upper), axis=1)
        assignment[inside] = material_id
    return assignment
