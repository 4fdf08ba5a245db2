"""
Hierarchy - load, validate, persist and synthesize multi-level meshes

Manifest format (YAML):

    levels:
      - path: coarse.node      # relative to the manifest
        label: coarse          # optional
        format: node           # optional, inferred from the suffix
      - path: fine.npz
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import yaml
from scipy.sparse.csgraph import connected_components

from models.errors import HierarchyError
from models.hierarchy import Hierarchy, LevelStats
from models.mesh import SimplicialMesh
from pipeline.distance import point_simplex_distance
from pipeline.mesh_io import load_mesh, save_mesh
from pipeline.mesh_ops import (
    adjacency,
    build_mesh,
    extract_boundary,
    facet_normals,
    mean_edge_length,
    rest_volumes,
    signed_volumes,
)
from pipeline.shapes import make_shape

logger = logging.getLogger(__name__)

MIN_BBOX_JACCARD = 0.5
EPSILON_FRACTION = 0.1
MAX_JITTER = 0.3
JITTER_RETRIES = 10


def bbox_jaccard(a: SimplicialMesh, b: SimplicialMesh) -> float:
    lo_a, hi_a = a.bbox()
    lo_b, hi_b = b.bbox()
    inter = np.prod(np.clip(np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b), 0.0, None))
    union = np.prod(hi_a - lo_a) + np.prod(hi_b - lo_b) - inter
    return float(inter / union) if union > 0 else 0.0


def boundary_epsilon(coarse: SimplicialMesh, fine: SimplicialMesh, chunk: int = 256) -> float:
    """Largest distance from a coarse boundary vertex to the fine boundary surface."""
    coarse_vertices = coarse.rest_positions[extract_boundary(coarse).vertices]
    fine_facets = fine.rest_positions[extract_boundary(fine).facets]
    if not len(coarse_vertices) or not len(fine_facets):
        return 0.0
    worst = 0.0
    for start in range(0, len(coarse_vertices), chunk):
        points = coarse_vertices[start:start + chunk]
        p = np.repeat(points, len(fine_facets), axis=0)
        corners = np.tile(fine_facets, (len(points), 1, 1))
        dist = point_simplex_distance(p, corners).reshape(len(points), len(fine_facets))
        worst = max(worst, float(dist.min(axis=1).max()))
    return worst


def validate_levels(levels: Sequence[SimplicialMesh], labels: Optional[Sequence[str]] = None,
                    reoriented: Optional[Sequence[int]] = None) -> Hierarchy:
    """Check the cross-level invariants and collect per-level stats."""
    if len(levels) < 1:
        raise HierarchyError("No levels given")
    dim = levels[0].dim
    for i, mesh in enumerate(levels):
        if mesh.dim != dim:
            raise HierarchyError(f"Level {i} has dim {mesh.dim}, level 0 has dim {dim}")
        mesh.level_id = i

    for i in range(1, len(levels)):
        if levels[i].n_vertices < levels[i - 1].n_vertices:
            logger.warning(
                f"Vertex count decreases from level {i - 1} ({levels[i - 1].n_vertices}) "
                f"to level {i} ({levels[i].n_vertices})"
            )
        overlap = bbox_jaccard(levels[i - 1], levels[i])
        if overlap < MIN_BBOX_JACCARD:
            raise HierarchyError(
                f"levels do not overlap: bbox Jaccard between level {i - 1} and {i} is {overlap:.3f}"
            )

    labels = list(labels) if labels else [f"level_{i}" for i in range(len(levels))]
    reoriented = list(reoriented) if reoriented else [0] * len(levels)
    stats = []
    for i, mesh in enumerate(levels):
        lo, hi = mesh.bbox()
        epsilon = None
        if i + 1 < len(levels):
            epsilon = boundary_epsilon(mesh, levels[i + 1])
            threshold = EPSILON_FRACTION * levels[i + 1].bbox_diagonal()
            if epsilon > threshold:
                logger.warning(
                    f"Level {i} boundary is {epsilon:.4g} m from level {i + 1} (threshold {threshold:.4g} m)"
                )
        stats.append(LevelStats(
            level=i,
            label=labels[i],
            vertices=mesh.n_vertices,
            elements=mesh.n_elements,
            volume=float(rest_volumes(mesh).sum()),
            bbox_min=lo.tolist(),
            bbox_max=hi.tolist(),
            reoriented=reoriented[i],
            epsilon=epsilon,
        ))
    hierarchy = Hierarchy(levels=list(levels), labels=labels, stats=stats)
    logger.info(f"Hierarchy validated: {len(levels)} levels, vertex counts {hierarchy.counts()}")
    return hierarchy


def load_hierarchy(paths: Sequence, labels: Optional[Sequence[str]] = None,
                   formats: Optional[Sequence[Optional[str]]] = None) -> Hierarchy:
    if len(paths) < 2:
        raise HierarchyError(f"A hierarchy needs at least 2 levels, got {len(paths)}")
    formats = formats or [None] * len(paths)
    levels, reoriented = [], []
    for i, (path, fmt) in enumerate(zip(paths, formats)):
        mesh, flipped = load_mesh(path, fmt, level_id=i)
        levels.append(mesh)
        reoriented.append(flipped)
    return validate_levels(levels, labels, reoriented)


def load_manifest(path) -> Hierarchy:
    path = Path(path)
    if not path.exists():
        raise HierarchyError(f"Hierarchy manifest not found: {path}")
    with open(path, "r") as f:
        data = yaml.safe_load(f) or {}
    entries = data.get("levels")
    if not isinstance(entries, list) or not entries:
        raise HierarchyError(f"{path.name}: 'levels' must be a non-empty list")
    paths, labels, formats = [], [], []
    for i, entry in enumerate(entries):
        if isinstance(entry, str):
            entry = {"path": entry}
        if "path" not in entry:
            raise HierarchyError(f"{path.name}: level {i} has no path")
        paths.append(path.parent / entry["path"])
        labels.append(str(entry.get("label", f"level_{i}")))
        formats.append(entry.get("format"))
    return load_hierarchy(paths, labels, formats)


def save_hierarchy(hierarchy: Hierarchy, directory) -> Path:
    """Binary dump per level plus a manifest; `load_manifest` reproduces it bit-exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, mesh in enumerate(hierarchy.levels):
        name = f"level_{i}.npz"
        save_mesh(mesh, directory / name)
        entries.append({"path": name, "label": hierarchy.labels[i], "format": "npz"})
    manifest = directory / "hierarchy.yaml"
    with open(manifest, "w") as f:
        yaml.safe_dump({"levels": entries}, f, sort_keys=False)
    logger.info(f"Saved {len(entries)} levels to {directory}")
    return manifest


# ---------------------------------------------------------------------------
# Synthetic hierarchies
# ---------------------------------------------------------------------------

_RED_2D = [(0, 3, 5), (3, 1, 4), (5, 4, 2), (3, 4, 5)]
# corners 0..3, midpoints 4:(0,1) 5:(0,2) 6:(0,3) 7:(1,2) 8:(1,3) 9:(2,3)
_RED_3D = [
    (0, 4, 5, 6), (4, 1, 7, 8), (5, 7, 2, 9), (6, 8, 9, 3),
    (4, 5, 6, 8), (4, 5, 7, 8), (5, 6, 8, 9), (5, 7, 8, 9),
]
_EDGES = {2: [(0, 1), (1, 2), (2, 0)], 3: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]}


def red_refine(mesh: SimplicialMesh):
    """Split every element into 2^d children through edge midpoints. Returns (positions, elements)."""
    dim = mesh.dim
    local_edges = np.array(_EDGES[dim])
    edges = np.sort(mesh.elements[:, local_edges].reshape(-1, 2), axis=1)
    keys, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(mesh.n_elements, len(local_edges))
    midpoints = 0.5 * (mesh.rest_positions[keys[:, 0]] + mesh.rest_positions[keys[:, 1]])
    positions = np.concatenate([mesh.rest_positions, midpoints])

    local = np.concatenate([mesh.elements, mesh.n_vertices + inverse], axis=1)
    pattern = np.array(_RED_2D if dim == 2 else _RED_3D)
    elements = local[:, pattern].reshape(-1, dim + 1)

    flipped = signed_volumes(positions, elements) < 0
    elements[flipped, 0], elements[flipped, 1] = elements[flipped, 1], elements[flipped, 0].copy()
    return positions, elements


def _vertex_normals(positions: np.ndarray, mesh_facets: np.ndarray) -> np.ndarray:
    normals = np.zeros_like(positions)
    facet_n = facet_normals(positions, mesh_facets)
    for k in range(mesh_facets.shape[1]):
        np.add.at(normals, mesh_facets[:, k], facet_n)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(lengths > 0, lengths, 1.0)


def synthesize_test_hierarchy(base: SimplicialMesh, levels: int, jitter: float = 0.0, seed: int = 0) -> Hierarchy:
    """
    Red-refine `levels - 1` times. With jitter > 0 every boundary vertex, inherited or new,
    slides along its normal by a smoothed zero-mean random offset, and interior vertices
    move randomly, each by up to `jitter` times the mean edge length. The fine boundary
    then crosses the coarse one in both directions, so levels stop being nested.
    """
    if levels < 2:
        raise HierarchyError(f"Need at least 2 levels, got {levels}")
    if not 0.0 <= jitter <= MAX_JITTER:
        raise HierarchyError(f"Jitter must lie in [0, {MAX_JITTER}], got {jitter}")
    rng = np.random.default_rng(seed)
    meshes = [SimplicialMesh(base.dim, base.rest_positions, base.elements, level_id=0)]

    for level in range(1, levels):
        parent = meshes[-1]
        positions, elements = red_refine(parent)
        refined = SimplicialMesh(parent.dim, positions, elements, level_id=level)
        if jitter > 0:
            refined = _jitter(refined, jitter, rng)
        meshes.append(refined)
        logger.debug(f"Synthesized level {level}: {refined.n_vertices} vertices")

    return validate_levels(meshes, labels=[f"synthetic_{i}" for i in range(levels)])


def boundary_offsets(mesh: SimplicialMesh, facets: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Signed offsets in [-1, 1] for the vertices of `facets` (in sorted vertex order): uniform
    noise averaged over boundary neighbours, shifted to zero mean and scaled to peak 1.
    """
    vertices = np.unique(facets)
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local[vertices] = np.arange(len(vertices))
    facets = local[facets]
    k = facets.shape[1]
    rows = np.repeat(facets, k, axis=1).ravel()
    cols = np.tile(facets, (1, k)).ravel()
    graph = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(vertices), len(vertices)))

    noise = rng.uniform(-1.0, 1.0, size=len(vertices))
    smooth = (graph @ noise) / np.asarray(graph.sum(axis=1)).ravel()
    smooth -= smooth.mean()
    peak = np.abs(smooth).max()
    return smooth / peak if peak > 0 else smooth


def _jitter(mesh: SimplicialMesh, jitter: float, rng: np.random.Generator) -> SimplicialMesh:
    boundary = extract_boundary(mesh)
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[boundary.vertices] = True
    normals = _vertex_normals(mesh.rest_positions, boundary.facets)
    step = jitter * mean_edge_length(mesh)
    interior = ~on_boundary

    for attempt in range(JITTER_RETRIES):
        positions = mesh.rest_positions.copy()
        offsets = boundary_offsets(mesh, boundary.facets, rng)
        positions[on_boundary] += step * offsets[:, None] * normals[on_boundary]
        direction = rng.normal(size=(int(interior.sum()), mesh.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = rng.uniform(0.0, 1.0, size=int(interior.sum()))
        positions[interior] += step * radius[:, None] * direction
        volumes = signed_volumes(positions, mesh.elements)
        if np.all(volumes > 0):
            return build_mesh(positions, mesh.elements, level_id=mesh.level_id)[0]
        logger.debug(f"Jitter attempt {attempt + 1} inverted {int((volumes <= 0).sum())} element(s)")
    raise HierarchyError(f"Jitter {jitter} inverted elements after {JITTER_RETRIES} retries")


def generated_hierarchy(shape: str, params: dict, per_level: Optional[List[dict]] = None,
                        refine_levels: int = 0, jitter: float = 0.0, seed: int = 0) -> Hierarchy:
    """
    Hierarchy from procedural shapes: either one shape per level (`per_level` parameter
    overrides) or red refinement of a single base shape.
    """
    if per_level:
        meshes = []
        for i, override in enumerate(per_level):
            mesh = make_shape(shape, **{**params, **override})
            meshes.append(SimplicialMesh(mesh.dim, mesh.rest_positions, mesh.elements, level_id=i))
        return validate_levels(meshes)
    if refine_levels < 2:
        raise HierarchyError("Generated hierarchy needs per_level entries or refine_levels >= 2")
    return synthesize_test_hierarchy(make_shape(shape, **params), refine_levels, jitter, seed)


def level_connectivity_ok(mesh: SimplicialMesh) -> bool:
    """True when the element graph is a single connected component."""
    n_components, _ = connected_components(adjacency(mesh).element_element, directed=False)
    return n_components == 1
