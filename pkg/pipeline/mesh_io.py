"""
Mesh I/O - read and write level meshes and boundary surfaces

Formats:
  node   TetGen-style `.node`/`.ele` ASCII pair. `.node` header is
         "<points> <dim> <attributes> <markers>", then "<index> <coords...> [attrs] [marker]".
         `.ele` header is "<elements> <nodes per element> <attributes>", then
         "<index> <v0> ... <vd> [attrs]". The index base (0 or 1) is taken from the first
         point index. Lines starting with '#' are comments.
  obj    Wavefront OBJ with `v` and `f` lines. Triangles are read as a 2D mesh and every
         z coordinate must be 0.
  npz    numpy archive with `positions`, `elements`, `dim`, `level_id`; round-trips bit-exactly.
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from models.errors import MeshError
from models.mesh import BoundarySurface, SimplicialMesh
from pipeline.mesh_ops import build_mesh

logger = logging.getLogger(__name__)

FORMATS = ("node", "obj", "npz")


def detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".node", ".ele"):
        return "node"
    if suffix == ".obj":
        return "obj"
    if suffix == ".npz":
        return "npz"
    raise MeshError(f"Cannot infer mesh format from '{path.name}'")


def _data_lines(path: Path) -> List[List[str]]:
    rows = []
    with open(path, "r") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(line.split())
    return rows


def _read_node_ele(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    node_path = path.with_suffix(".node")
    ele_path = path.with_suffix(".ele")
    for p in (node_path, ele_path):
        if not p.exists():
            raise MeshError(f"Missing mesh file: {p}")
    try:
        rows = _data_lines(node_path)
        n_points, dim = int(rows[0][0]), int(rows[0][1])
        body = rows[1:1 + n_points]
        if len(body) != n_points:
            raise MeshError(f"{node_path.name}: expected {n_points} points, found {len(body)}")
        base = int(body[0][0]) if body else 0
        if base not in (0, 1):
            raise MeshError(f"{node_path.name}: first point index must be 0 or 1, got {base}")
        ids = np.array([int(r[0]) for r in body], dtype=np.int64) - base
        coords = np.array([[float(v) for v in r[1:1 + dim]] for r in body], dtype=np.float64)
        positions = np.empty_like(coords)
        positions[ids] = coords

        rows = _data_lines(ele_path)
        n_elements, per_element = int(rows[0][0]), int(rows[0][1])
        body = rows[1:1 + n_elements]
        if len(body) != n_elements:
            raise MeshError(f"{ele_path.name}: expected {n_elements} elements, found {len(body)}")
        elements = np.array([[int(v) for v in r[1:1 + per_element]] for r in body], dtype=np.int64) - base
    except (ValueError, IndexError) as e:
        raise MeshError(f"Failed to parse {path.stem}.node/.ele: {e}")
    return positions.reshape(-1, dim), elements.reshape(-1, per_element)


def _read_obj(path: Path) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vertices, triangles and polyline segments of an OBJ file (0-based)."""
    vertices, faces, segments = [], [], []
    try:
        for parts in _data_lines(path):
            tag = parts[0]
            if tag == "v":
                vertices.append([float(v) for v in parts[1:4]])
            elif tag in ("f", "l"):
                ids = []
                for token in parts[1:]:
                    idx = int(token.split("/")[0])
                    ids.append(idx - 1 if idx > 0 else len(vertices) + idx)
                if tag == "f":
                    # fan-triangulate polygons
                    for k in range(1, len(ids) - 1):
                        faces.append([ids[0], ids[k], ids[k + 1]])
                else:
                    segments.extend([ids[k], ids[k + 1]] for k in range(len(ids) - 1))
    except (ValueError, IndexError) as e:
        raise MeshError(f"Failed to parse {path.name}: {e}")
    return (
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
        np.array(segments, dtype=np.int64).reshape(-1, 2),
    )


def load_mesh(path, format: Optional[str] = None, level_id: int = 0) -> Tuple[SimplicialMesh, int]:
    """
    Load and validate a level mesh.

    Returns (mesh, reoriented_count).
    """
    path = Path(path)
    format = format or detect_format(path)
    if format not in FORMATS:
        raise MeshError(f"Unknown mesh format '{format}'")

    if format == "npz":
        if not path.exists():
            raise MeshError(f"Missing mesh file: {path}")
        with np.load(path) as data:
            positions = data["positions"]
            elements = data["elements"]
            level_id = int(data["level_id"]) if "level_id" in data else level_id
    elif format == "node":
        positions, elements = _read_node_ele(path)
    else:
        if not path.exists():
            raise MeshError(f"Missing mesh file: {path}")
        vertices, faces, _ = _read_obj(path)
        if vertices.size and np.any(vertices[:, 2] != 0.0):
            raise MeshError(f"{path.name}: OBJ volume meshes must be planar (all z = 0)")
        positions, elements = vertices[:, :2], faces

    mesh, reoriented = build_mesh(positions, elements, level_id=level_id)
    logger.info(
        f"Loaded {path.name}: {mesh.n_vertices} vertices, {mesh.n_elements} elements, dim={mesh.dim}"
        + (f", reoriented {reoriented}" if reoriented else "")
    )
    return mesh, reoriented


def save_mesh(mesh: SimplicialMesh, path) -> Path:
    """Binary dump that `load_mesh` reads back bit-exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(
            f,
            positions=mesh.rest_positions,
            elements=mesh.elements,
            dim=np.int64(mesh.dim),
            level_id=np.int64(mesh.level_id),
        )
    return path


def save_node_ele(mesh: SimplicialMesh, path, base: int = 1) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path.with_suffix(".node"), "w") as f:
        f.write(f"{mesh.n_vertices} {mesh.dim} 0 0\n")
        for i, p in enumerate(mesh.rest_positions):
            f.write(f"{i + base} " + " ".join(repr(float(c)) for c in p) + "\n")
    with open(path.with_suffix(".ele"), "w") as f:
        f.write(f"{mesh.n_elements} {mesh.dim + 1} 0\n")
        for i, e in enumerate(mesh.elements):
            f.write(f"{i + base} " + " ".join(str(int(v) + base) for v in e) + "\n")
    return path.with_suffix(".node")


def load_surface(path, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read an obstacle surface from OBJ: triangles for dim=3, `l` polylines
    (or triangle edges) for dim=2. Returns (vertices, facets).
    """
    path = Path(path)
    if not path.exists():
        raise MeshError(f"Missing surface file: {path}")
    vertices, faces, segments = _read_obj(path)
    if dim == 3:
        if not len(faces):
            raise MeshError(f"{path.name}: no triangles for a 3D obstacle")
        return vertices, faces
    if np.any(vertices[:, 2] != 0.0):
        raise MeshError(f"{path.name}: 2D obstacles must be planar (all z = 0)")
    if not len(segments) and len(faces):
        edges = np.sort(faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        keys, counts = np.unique(edges, axis=0, return_counts=True)
        segments = keys[counts == 1]
        # restore the winding of each boundary edge
        oriented = faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        lookup = {tuple(e) for e in segments.tolist()}
        segments = np.array([e for e in oriented.tolist() if tuple(sorted(e)) in lookup], dtype=np.int64)
    if not len(segments):
        raise MeshError(f"{path.name}: no segments for a 2D obstacle")
    return vertices[:, :2], segments


def write_boundary_obj(positions: np.ndarray, boundary: BoundarySurface, path) -> Path:
    """Boundary facets as OBJ: triangles in 3D, polylines in 2D (z = 0)."""
    path = Path(path)
    used = boundary.vertices
    remap = np.full(len(positions), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    with open(path, "w") as f:
        for p in positions[used]:
            xyz = list(p) + [0.0] * (3 - len(p))
            f.write("v " + " ".join(f"{c:.9g}" for c in xyz) + "\n")
        tag = "f" if positions.shape[1] == 3 else "l"
        for facet in remap[boundary.facets]:
            f.write(tag + " " + " ".join(str(int(v) + 1) for v in facet) + "\n")
    return path
