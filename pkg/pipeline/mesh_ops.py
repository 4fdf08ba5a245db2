"""
Mesh Operations - orientation, volumes, boundary extraction, lumped mass and adjacency
Works for triangles (2D) and tetrahedra (3D) through one code path.
"""

import logging
import math
from typing import Tuple, Union

import igl
import numpy as np
import scipy.sparse as sp

from models.errors import MeshError
from models.mesh import BoundarySurface, LumpedMass, MeshAdjacency, SimplicialMesh

logger = logging.getLogger(__name__)

# Elements with |volume| below this fraction of bbox^d are rejected
DEGENERACY_FLOOR = 1e-14

# Outward facet of a positively oriented simplex, listed opposite vertex 0..d
OUTWARD_FACETS = {
    2: np.array([[1, 2], [2, 0], [0, 1]]),
    3: np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]]),
}


def shape_matrices(positions: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Edge matrices [x1 - x0, ..., xd - x0] per element, shape (m, d, d)."""
    corners = positions[elements]
    return np.swapaxes(corners[:, 1:, :] - corners[:, :1, :], 1, 2)


def signed_volumes(positions: np.ndarray, elements: np.ndarray) -> np.ndarray:
    dim = positions.shape[1]
    return np.linalg.det(shape_matrices(positions, elements)) / math.factorial(dim)


def basis_gradients(mesh: SimplicialMesh) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of the linear hat functions in every element.

    Returns (grads, dm_inv) where grads[e, a] is the gradient of the basis function
    of local vertex a and dm_inv is the inverse rest shape matrix.
    """
    dm = shape_matrices(mesh.rest_positions, mesh.elements)
    dm_inv = np.linalg.inv(dm)
    grads = np.empty((mesh.n_elements, mesh.dim + 1, mesh.dim))
    grads[:, 1:, :] = dm_inv
    grads[:, 0, :] = -dm_inv.sum(axis=1)
    return grads, dm_inv


def build_mesh(positions, elements, level_id: int = 0) -> Tuple[SimplicialMesh, int]:
    """
    Validate raw arrays and return a mesh with positive element volumes.

    Returns (mesh, reoriented_count). Degenerate elements raise MeshError naming the element.
    """
    positions = np.asarray(positions, dtype=np.float64)
    elements = np.array(elements, dtype=np.int64, copy=True)
    if positions.ndim != 2 or positions.shape[1] not in (2, 3):
        raise MeshError(f"Positions must be (n, 2) or (n, 3), got {positions.shape}")
    dim = positions.shape[1]
    if elements.ndim != 2 or elements.shape[1] != dim + 1:
        raise MeshError(f"Expected {dim + 1} vertices per element for a {dim}D mesh, got {elements.shape}")
    if elements.size and (elements.min() < 0 or elements.max() >= len(positions)):
        raise MeshError("Element references a vertex out of range")

    volumes = signed_volumes(positions, elements) if len(elements) else np.zeros(0)
    extent = positions.max(axis=0) - positions.min(axis=0) if len(positions) else np.zeros(dim)
    floor = DEGENERACY_FLOOR * float(np.linalg.norm(extent)) ** dim
    degenerate = np.nonzero(np.abs(volumes) <= floor)[0]
    if len(degenerate):
        bad = int(degenerate[0])
        raise MeshError(f"Degenerate element {bad} (volume {volumes[bad]:.3e})", element=bad)

    inverted = volumes < 0
    reoriented = int(inverted.sum())
    if reoriented:
        elements[inverted, 0], elements[inverted, 1] = elements[inverted, 1], elements[inverted, 0].copy()
        logger.warning(f"Reoriented {reoriented} inverted element(s)")

    return SimplicialMesh(dim=dim, rest_positions=positions, elements=elements, level_id=level_id), reoriented


def rest_volumes(mesh: SimplicialMesh) -> np.ndarray:
    return signed_volumes(mesh.rest_positions, mesh.elements)


def element_centroids(mesh: SimplicialMesh, positions: np.ndarray = None) -> np.ndarray:
    positions = mesh.rest_positions if positions is None else positions
    return positions[mesh.elements].mean(axis=1)


def igl_arrays(mesh: SimplicialMesh) -> Tuple[np.ndarray, np.ndarray]:
    """(V, T) as libigl expects them; planar meshes are lifted to z = 0."""
    V = mesh.rest_positions
    if mesh.dim == 2:
        V = np.hstack([V, np.zeros((mesh.n_vertices, 1))])
    return np.array(V, dtype=np.float64, order="C"), np.array(mesh.elements, dtype=np.int64, order="C")


def _facet_codes(keys: np.ndarray, n_vertices: int) -> np.ndarray:
    """One integer per sorted facet key."""
    codes = np.zeros(len(keys), dtype=np.int64)
    for column in keys.T:
        codes = codes * n_vertices + column
    return codes


def _all_facets(mesh: SimplicialMesh):
    """Every oriented facet of every element with its parent and sorted key."""
    local = OUTWARD_FACETS[mesh.dim]
    facets = mesh.elements[:, local].reshape(-1, mesh.dim)
    parents = np.repeat(np.arange(mesh.n_elements), mesh.dim + 1)
    keys = np.sort(facets, axis=1)
    return facets, parents, keys


def extract_boundary(mesh: SimplicialMesh) -> BoundarySurface:
    """Facets used by exactly one element, oriented outward."""
    facets, parents, keys = _all_facets(mesh)
    if not len(facets):
        return BoundarySurface(np.zeros((0, mesh.dim), dtype=np.int64), np.zeros(0, dtype=np.int64))
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max() > 2:
        shared = int(np.nonzero(counts[inverse] > 2)[0][0])
        raise MeshError(
            f"Non-manifold facet {keys[shared].tolist()} shared by {int(counts[inverse[shared]])} elements",
            element=int(parents[shared]),
        )

    outline = igl.boundary_facets(igl_arrays(mesh)[1])
    if isinstance(outline, tuple):
        # libigl >= 2.6 also returns parent elements and local indices
        outline = outline[0]
    outline = np.sort(np.asarray(outline, dtype=np.int64).reshape(-1, mesh.dim), axis=1)
    on_boundary = np.isin(_facet_codes(keys, mesh.n_vertices), _facet_codes(outline, mesh.n_vertices))
    return BoundarySurface(facets=facets[on_boundary], parent_elements=parents[on_boundary])


def facet_normals(positions: np.ndarray, facets: np.ndarray) -> np.ndarray:
    """Unit normals of oriented facets (outward for an extracted boundary)."""
    if positions.shape[1] == 2:
        edge = positions[facets[:, 1]] - positions[facets[:, 0]]
        normals = np.stack([edge[:, 1], -edge[:, 0]], axis=1)
    else:
        e1 = positions[facets[:, 1]] - positions[facets[:, 0]]
        e2 = positions[facets[:, 2]] - positions[facets[:, 0]]
        normals = np.cross(e1, e2)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(lengths > 0, lengths, 1.0)


def lumped_mass(mesh: SimplicialMesh, density: Union[float, np.ndarray]) -> LumpedMass:
    """Each vertex receives 1/(d+1) of the mass of every incident element."""
    density = np.broadcast_to(np.asarray(density, dtype=np.float64), (mesh.n_elements,))
    if np.any(density <= 0):
        raise MeshError("Density must be strictly positive")
    if mesh.n_elements and np.all(density == density[0]):
        V, T = igl_arrays(mesh)
        values = density[0] * igl.massmatrix(V, T, igl.MASSMATRIX_TYPE_BARYCENTRIC).diagonal()
    else:
        # per-element densities: scatter element masses through the incidence matrix
        k = mesh.dim + 1
        incidence = sp.csr_matrix(
            (np.full(mesh.n_elements * k, 1.0 / k), (mesh.elements.reshape(-1), np.repeat(np.arange(mesh.n_elements), k))),
            shape=(mesh.n_vertices, mesh.n_elements),
        )
        values = incidence @ (density * rest_volumes(mesh))
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if np.any(values <= 0):
        orphan = int(np.nonzero(values <= 0)[0][0])
        raise MeshError(f"Vertex {orphan} is not used by any element")
    return LumpedMass(values)


def adjacency(mesh: SimplicialMesh) -> MeshAdjacency:
    n, m, k = mesh.n_vertices, mesh.n_elements, mesh.dim + 1

    rows = np.repeat(mesh.elements, k, axis=1).reshape(-1)
    cols = np.tile(mesh.elements, (1, k)).reshape(-1)
    keep = rows != cols
    vv = sp.csr_matrix((np.ones(int(keep.sum()), dtype=bool), (rows[keep], cols[keep])), shape=(n, n))

    _, parents, keys = _all_facets(mesh)
    if len(keys):
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        grouped = inverse[order]
        shared = counts[grouped] == 2
        pair_parents = parents[order][shared].reshape(-1, 2)
        a, b = pair_parents[:, 0], pair_parents[:, 1]
        ee = sp.csr_matrix(
            (np.ones(2 * len(a), dtype=bool), (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(m, m)
        )
    else:
        ee = sp.csr_matrix((m, m), dtype=bool)

    incidence = sp.csr_matrix(
        (np.ones(m * k, dtype=bool), (mesh.elements.reshape(-1), np.repeat(np.arange(m), k))), shape=(n, m)
    )
    for graph in (vv, ee, incidence):
        graph.sum_duplicates()
        graph.sort_indices()
    return MeshAdjacency(vertex_vertex=vv, element_element=ee, vertex_elements=incidence)


def mean_edge_length(mesh: SimplicialMesh) -> float:
    adj = adjacency(mesh).vertex_vertex.tocoo()
    upper = adj.row < adj.col
    lengths = np.linalg.norm(
        mesh.rest_positions[adj.row[upper]] - mesh.rest_positions[adj.col[upper]], axis=1
    )
    return float(lengths.mean()) if len(lengths) else 0.0
