"""
Shapes - procedural base meshes for synthetic hierarchies and shipped scenes
"""

import itertools
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay

from models.errors import ConfigError
from models.mesh import SimplicialMesh
from pipeline.mesh_ops import build_mesh

logger = logging.getLogger(__name__)


def _compact(positions: np.ndarray, elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Drop vertices no element uses and renumber."""
    used = np.unique(elements)
    remap = np.full(len(positions), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return positions[used], remap[elements]


def grid_2d(xs: Sequence[float], ys: Sequence[float], keep: Optional[Callable[[int, int], bool]] = None) -> SimplicialMesh:
    """
    Triangulated tensor grid. Cell (i, j) spans [xs[i], xs[i+1]] x [ys[j], ys[j+1]] and is
    split along its (i, j)-(i+1, j+1) diagonal; `keep(i, j)` can drop cells.
    """
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    nx, ny = len(xs), len(ys)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    positions = np.stack([gx.ravel(), gy.ravel()], axis=1)

    def vid(i, j):
        return i * ny + j

    elements = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            if keep is not None and not keep(i, j):
                continue
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            elements.append([a, b, c])
            elements.append([a, c, d])
    positions, elements = _compact(positions, np.array(elements, dtype=np.int64))
    return build_mesh(positions, elements)[0]


def rectangle(width: float = 1.0, height: float = 1.0, nx: int = 1, ny: int = 1, origin=(0.0, 0.0)) -> SimplicialMesh:
    xs = origin[0] + np.linspace(0.0, width, nx + 1)
    ys = origin[1] + np.linspace(0.0, height, ny + 1)
    return grid_2d(xs, ys)


def disk(radius: float = 1.0, rings: int = 4, center=(0.0, 0.0)) -> SimplicialMesh:
    """Ring k carries 6k vertices, so the disk has 1 + 3k(k+1) vertices."""
    if rings < 1:
        raise ConfigError("Disk needs at least one ring")
    points = [np.zeros((1, 2))]
    for k in range(1, rings + 1):
        count = 6 * k
        # half-step stagger on odd rings
        theta = 2.0 * np.pi * (np.arange(count) + 0.5 * (k % 2)) / count
        r = radius * k / rings
        points.append(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1))
    positions = np.concatenate(points) + np.asarray(center, dtype=np.float64)
    triangles = Delaunay(positions).simplices
    return build_mesh(positions, triangles)[0]


def u_shape(xs: Sequence[float], ys: Sequence[float], gap: Tuple[float, float], floor: float) -> SimplicialMesh:
    """Grid with the cells inside x in `gap` removed above y = `floor`."""
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)

    def keep(i, j):
        in_gap = xs[i] >= gap[0] - 1e-12 and xs[i + 1] <= gap[1] + 1e-12
        return not (in_gap and ys[j] >= floor - 1e-12)

    return grid_2d(xs, ys, keep)


def box(size=(1.0, 1.0, 1.0), n=(1, 1, 1), origin=(0.0, 0.0, 0.0)) -> SimplicialMesh:
    """Hexahedral grid split into six tetrahedra per cell along the main diagonal."""
    axes = [origin[a] + np.linspace(0.0, size[a], n[a] + 1) for a in range(3)]
    grids = np.meshgrid(*axes, indexing="ij")
    positions = np.stack([g.ravel() for g in grids], axis=1)
    shape = tuple(k + 1 for k in n)

    elements = []
    for cell in itertools.product(*(range(k) for k in n)):
        for perm in itertools.permutations(range(3)):
            corner = list(cell)
            tet = [np.ravel_multi_index(tuple(corner), shape)]
            for axis in perm:
                corner[axis] += 1
                tet.append(np.ravel_multi_index(tuple(corner), shape))
            elements.append(tet)
    return build_mesh(positions, np.array(elements, dtype=np.int64))[0]


def single_tet(scale: float = 1.0) -> SimplicialMesh:
    positions = scale * np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)
    return build_mesh(positions, [[0, 1, 2, 3]])[0]


def single_triangle(scale: float = 1.0) -> SimplicialMesh:
    positions = scale * np.array([[0, 0], [1, 0], [0, 1]], dtype=np.float64)
    return build_mesh(positions, [[0, 1, 2]])[0]


SHAPES = {
    "rectangle": rectangle,
    "disk": disk,
    "u_shape": u_shape,
    "box": box,
    "single_tet": single_tet,
    "single_triangle": single_triangle,
}


def make_shape(name: str, **params) -> SimplicialMesh:
    if name not in SHAPES:
        raise ConfigError(f"Unknown shape '{name}'. Available: {sorted(SHAPES)}")
    try:
        return SHAPES[name](**params)
    except TypeError as e:
        raise ConfigError(f"Bad parameters for shape '{name}': {e}")
