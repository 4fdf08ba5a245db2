"""
Binding - attach every fine vertex to a host coarse element

Vertices inside the coarse mesh are bound by containment. Exterior vertices are
bound by frontier propagation: the unassigned vertex with the most assigned
neighbors goes next, rays along its incident edges pick the first coarse boundary
facet they hit, and the neighbors' hosts are the fallback. The naive closest-point
binding is kept as a baseline.

Text format (one line per vertex, '#' header):
    <vertex> <host> <status> <w0> ... <wd>
"""

import heapq
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.csgraph import shortest_path

from models.binding import BindingAudit, BindingMap, BindingStatus
from models.errors import BindingError
from models.mesh import BoundarySurface, MeshAdjacency, SimplicialMesh
from pipeline.distance import closest_on_simplices, segment_ray_hits, triangle_ray_hits
from pipeline.mesh_ops import adjacency, element_centroids, extract_boundary
from pipeline.spatial import AABBTree

logger = logging.getLogger(__name__)

CONTAINMENT_TOL = 1e-10
RAY_TIE_TOL = 1e-12
AUDIT_HOPS = 3


def _affine_system(mesh: SimplicialMesh, elements: np.ndarray) -> np.ndarray:
    """(k, d+1, d+1) matrices [[x_0 ... x_d], [1 ... 1]]."""
    corners = mesh.rest_positions[mesh.elements[elements]]  # (k, d+1, d)
    top = np.swapaxes(corners, 1, 2)                     # (k, d, d+1)
    ones = np.ones((len(elements), 1, mesh.dim + 1))
    return np.concatenate([top, ones], axis=1)


def barycentric_batch(mesh: SimplicialMesh, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Weights of `points[i]` in `elements[i]`, negative entries allowed."""
    elements = np.asarray(elements, dtype=np.int64)
    if not len(elements):
        return np.zeros((0, mesh.dim + 1))
    rhs = np.concatenate([np.atleast_2d(points), np.ones((len(elements), 1))], axis=1)
    try:
        return np.linalg.solve(_affine_system(mesh, elements), rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as e:
        raise BindingError(f"Singular element matrix: {e}")


def barycentric_in_element(mesh: SimplicialMesh, element: int, point) -> np.ndarray:
    point = np.asarray(point, dtype=np.float64)
    return barycentric_batch(mesh, np.array([element]), point[None, :])[0]


def bind_containment(fine: SimplicialMesh, coarse: SimplicialMesh,
                     tree: Optional[AABBTree] = None) -> Tuple[BindingMap, np.ndarray]:
    """
    Bind every fine vertex lying in a coarse element; the lowest element index wins ties.

    Returns the partial map and the sorted array of unassigned vertices.
    """
    if fine.dim != coarse.dim:
        raise BindingError(f"Dimension mismatch: fine {fine.dim}D, coarse {coarse.dim}D")
    binding = BindingMap.empty(fine.n_vertices, fine.dim, coarse.n_elements)
    tree = tree or AABBTree.from_simplices(coarse.rest_positions, coarse.elements)
    pad = CONTAINMENT_TOL * max(coarse.bbox_diagonal(), 1.0)
    vertices, candidates = tree.query_points(fine.rest_positions, pad)
    if len(vertices):
        weights = barycentric_batch(coarse, candidates, fine.rest_positions[vertices])
        inside = weights.min(axis=1) >= -CONTAINMENT_TOL
        vertices, candidates, weights = vertices[inside], candidates[inside], weights[inside]
        # pairs are sorted by (vertex, element): the first per vertex has the lowest element index
        first = np.unique(vertices, return_index=True)[1]
        vertices, candidates, weights = vertices[first], candidates[first], weights[first]
        weights = np.clip(weights, 0.0, None)
        weights /= weights.sum(axis=1, keepdims=True)
        binding.hosts[vertices] = candidates
        binding.coords[vertices] = weights
        binding.status[vertices] = BindingStatus.INSIDE
    unassigned = binding.unassigned
    logger.info(f"Containment bound {fine.n_vertices - len(unassigned)}/{fine.n_vertices} vertices")
    return binding, unassigned


def containment_brute_force(fine: SimplicialMesh, coarse: SimplicialMesh) -> np.ndarray:
    """Host per fine vertex by testing every element (-1 when outside); O(V*T) oracle."""
    hosts = np.full(fine.n_vertices, -1, dtype=np.int64)
    for v, point in enumerate(fine.rest_positions):
        weights = barycentric_batch(coarse, np.arange(coarse.n_elements), np.repeat(point[None], coarse.n_elements, 0))
        inside = np.nonzero(weights.min(axis=1) >= -CONTAINMENT_TOL)[0]
        if len(inside):
            hosts[v] = inside[0]
    return hosts


def _first_ray_hit(origin: np.ndarray, targets: np.ndarray, coarse: SimplicialMesh,
                   boundary: BoundarySurface) -> Optional[int]:
    """Index of the boundary facet first hit by half-lines from `origin` toward `targets`."""
    if not len(targets) or not boundary.n_facets:
        return None
    directions = targets - origin
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    origins = np.repeat(origin[None, :], len(directions), axis=0)
    corners = coarse.rest_positions[boundary.facets]
    if coarse.dim == 2:
        t = segment_ray_hits(origins, directions, corners[:, 0], corners[:, 1], RAY_TIE_TOL)
    else:
        t = triangle_ray_hits(origins, directions, corners[:, 0], corners[:, 1], corners[:, 2], RAY_TIE_TOL)
    per_facet = t.min(axis=0)
    best = per_facet.min()
    if not np.isfinite(best):
        return None
    tied = np.nonzero(per_facet <= best + RAY_TIE_TOL * max(best, 1.0))[0]
    return int(tied[0])


def bind_exterior_robust(fine: SimplicialMesh, coarse: SimplicialMesh, partial: BindingMap,
                         unassigned: np.ndarray, boundary: Optional[BoundarySurface] = None,
                         fine_adjacency: Optional[MeshAdjacency] = None) -> BindingMap:
    """Frontier propagation over the fine vertex graph; see the module docstring."""
    binding = partial.copy()
    unassigned = np.asarray(unassigned, dtype=np.int64)
    if not len(unassigned):
        return binding
    boundary = boundary or extract_boundary(coarse)
    fine_adjacency = fine_adjacency or adjacency(fine)
    centroids = element_centroids(coarse)
    positions = fine.rest_positions

    pending = np.zeros(fine.n_vertices, dtype=bool)
    pending[unassigned] = True
    counts = np.zeros(fine.n_vertices, dtype=np.int64)
    for v in unassigned:
        counts[v] = int(np.count_nonzero(~pending[fine_adjacency.vertex_neighbors(v)]))
    heap = [(-int(counts[v]), int(v)) for v in unassigned]
    heapq.heapify(heap)

    via_rays = 0
    while heap:
        neg_count, v = heapq.heappop(heap)
        if not pending[v] or -neg_count != counts[v]:
            continue
        neighbors = fine_adjacency.vertex_neighbors(v)
        facet = _first_ray_hit(positions[v], positions[neighbors], coarse, boundary)
        if facet is not None:
            host = int(boundary.parent_elements[facet])
            via_rays += 1
        else:
            hosts = np.unique(binding.hosts[neighbors[~pending[neighbors]]])
            if not len(hosts):
                raise BindingError(f"Fine vertex {v} has no ray hit and no assigned neighbor", vertex=int(v))
            gaps = np.linalg.norm(centroids[hosts] - positions[v], axis=1)
            host = int(hosts[np.argmin(gaps)])

        binding.assign(v, host, barycentric_in_element(coarse, host, positions[v]), BindingStatus.EXTRAPOLATED)
        pending[v] = False
        for w in neighbors:
            if pending[w]:
                counts[w] += 1
                heapq.heappush(heap, (-int(counts[w]), int(w)))

    logger.info(
        f"Exterior binding: {len(unassigned)} vertices ({via_rays} by ray hits, "
        f"{len(unassigned) - via_rays} from neighbor hosts)"
    )
    binding.validate()
    return binding


def bind_naive_closest(fine: SimplicialMesh, coarse: SimplicialMesh, chunk: int = 256) -> BindingMap:
    """Exterior vertices go to the element owning the Euclidean-closest coarse boundary point."""
    binding, unassigned = bind_containment(fine, coarse)
    if not len(unassigned):
        return binding
    boundary = extract_boundary(coarse)
    corners = coarse.rest_positions[boundary.facets]
    for start in range(0, len(unassigned), chunk):
        batch = unassigned[start:start + chunk]
        points = np.repeat(fine.rest_positions[batch], boundary.n_facets, axis=0)
        closest, _ = closest_on_simplices(points, np.tile(corners, (len(batch), 1, 1)))
        dist = np.linalg.norm(points - closest, axis=1).reshape(len(batch), boundary.n_facets)
        hosts = boundary.parent_elements[np.argmin(dist, axis=1)]
        weights = barycentric_batch(coarse, hosts, fine.rest_positions[batch])
        binding.hosts[batch] = hosts
        binding.coords[batch] = weights
        binding.status[batch] = BindingStatus.EXTRAPOLATED
    binding.validate()
    return binding


def bind_robust(fine: SimplicialMesh, coarse: SimplicialMesh) -> BindingMap:
    partial, unassigned = bind_containment(fine, coarse)
    binding = bind_exterior_robust(fine, coarse, partial, unassigned)
    binding.validate()
    logger.info(f"Binding summary: {binding.summary()}")
    return binding


def bind_reverse(coarse: SimplicialMesh, fine: SimplicialMesh) -> BindingMap:
    """Bind coarse vertices into fine elements (roles swapped)."""
    return bind_robust(fine=coarse, coarse=fine)


def audit_binding(fine: SimplicialMesh, coarse: SimplicialMesh, binding: BindingMap,
                  threshold: int = AUDIT_HOPS, fine_adjacency: Optional[MeshAdjacency] = None) -> BindingAudit:
    """
    For every vertex, the smallest element-graph hop count between its host and the
    host of any neighbor bound by containment. Vertices over `threshold` are flagged.
    """
    fine_adjacency = fine_adjacency or adjacency(fine)
    coarse_graph = adjacency(coarse).element_element
    inside = binding.status == BindingStatus.INSIDE
    distances = np.full(fine.n_vertices, -1, dtype=np.int64)

    sources = np.unique(binding.hosts[binding.hosts >= 0])
    if len(sources):
        hops = shortest_path(coarse_graph, directed=False, unweighted=True, indices=sources)
        row_of = {int(h): i for i, h in enumerate(sources)}
        for v in range(fine.n_vertices):
            if binding.hosts[v] < 0:
                continue
            neighbors = fine_adjacency.vertex_neighbors(v)
            seeded = binding.hosts[neighbors[inside[neighbors]]]
            if not len(seeded):
                continue
            best = hops[row_of[int(binding.hosts[v])], seeded].min()
            distances[v] = int(best) if np.isfinite(best) else np.iinfo(np.int32).max

    flagged = np.nonzero(distances > threshold)[0].tolist()
    audit = BindingAudit(distances=distances, threshold=threshold, flagged=flagged)
    for v in flagged:
        if inside[v]:
            logger.warning(f"Inside vertex {v} is more than {threshold} element hops from all neighbor hosts")
    if flagged:
        logger.warning(f"Binding audit flagged {len(flagged)} vertices (> {threshold} hops)")
    return audit


def save_binding(binding: BindingMap, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(f"# vertices={binding.n_vertices} host_elements={binding.n_host_elements}\n")
        f.write("# vertex host status weights...\n")
        for v in range(binding.n_vertices):
            status = BindingStatus(int(binding.status[v])).name.lower()
            weights = " ".join(repr(float(w)) for w in binding.coords[v])
            f.write(f"{v} {int(binding.hosts[v])} {status} {weights}\n")
    return path


def load_binding(path) -> BindingMap:
    path = Path(path)
    with open(path, "r") as f:
        header = f.readline()
        fields = dict(item.split("=") for item in header.lstrip("# ").split())
        rows = [line.split() for line in f if line.strip() and not line.startswith("#")]
    n = int(fields["vertices"])
    dim_plus = len(rows[0]) - 3 if rows else 1
    binding = BindingMap.empty(n, dim_plus - 1, int(fields["host_elements"]))
    for row in rows:
        v = int(row[0])
        binding.assign(v, int(row[1]), np.array([float(w) for w in row[3:]]), BindingStatus[row[2].upper()])
    return binding
