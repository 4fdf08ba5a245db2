import numpy as np
import pytest
from hypothesis import given, strategies as st

from models.errors import MeshError
from pipeline.mesh_io import load_mesh, save_mesh
from pipeline.mesh_ops import adjacency, build_mesh, extract_boundary, facet_normals, lumped_mass, rest_volumes
from pipeline.shapes import box, rectangle

TET_NODE = """4 3 0 0
1 0.0 0.0 0.0
2 1.0 0.0 0.0
3 0.0 1.0 0.0
4 0.0 0.0 1.0
"""


def write_tet(tmp_path, ele_line):
    (tmp_path / "tet.node").write_text(TET_NODE)
    (tmp_path / "tet.ele").write_text("1 4 0\n" + ele_line + "\n")
    return tmp_path / "tet.node"


def test_load_single_tet(tmp_path):
    mesh, reoriented = load_mesh(write_tet(tmp_path, "1 1 2 3 4"))
    assert mesh.dim == 3
    assert mesh.n_vertices == 4 and mesh.n_elements == 1
    assert reoriented == 0
    assert rest_volumes(mesh)[0] == pytest.approx(1.0 / 6.0)


def test_load_inverted_tet_is_reoriented(tmp_path):
    mesh, reoriented = load_mesh(write_tet(tmp_path, "1 2 1 3 4"))
    assert reoriented == 1
    assert rest_volumes(mesh)[0] == pytest.approx(1.0 / 6.0)


def test_zero_based_node_files(tmp_path):
    (tmp_path / "tet.node").write_text("4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n")
    (tmp_path / "tet.ele").write_text("1 4 0\n0 0 1 2 3\n")
    mesh, _ = load_mesh(tmp_path / "tet.node")
    np.testing.assert_array_equal(mesh.elements, [[0, 1, 2, 3]])


def test_load_obj_unit_square(tmp_path):
    path = tmp_path / "square.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n")
    mesh, _ = load_mesh(path)
    assert mesh.dim == 2 and mesh.n_vertices == 4
    assert rest_volumes(mesh).sum() == pytest.approx(1.0)


def test_obj_with_depth_is_rejected(tmp_path):
    path = tmp_path / "bent.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0.5\nf 1 2 3\n")
    with pytest.raises(MeshError):
        load_mesh(path)


def test_degenerate_element_names_its_index():
    positions = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(MeshError) as info:
        build_mesh(positions, [[0, 1, 2], [0, 1, 3]])
    assert info.value.element == 1


def test_npz_dump_is_exact(tmp_path, slab):
    mesh, _ = load_mesh(save_mesh(slab, tmp_path / "slab.npz"))
    np.testing.assert_array_equal(mesh.rest_positions, slab.rest_positions)
    np.testing.assert_array_equal(mesh.elements, slab.elements)


def test_boundary_counts(unit_tet, two_tets, unit_square):
    assert extract_boundary(unit_tet).n_facets == 4
    assert extract_boundary(two_tets).n_facets == 6
    assert extract_boundary(unit_square).n_facets == 4


def test_boundary_normals_point_outward(slab):
    boundary = extract_boundary(slab)
    normals = facet_normals(slab.rest_positions, boundary.facets)
    midpoints = slab.rest_positions[boundary.facets].mean(axis=1)
    center = slab.rest_positions.mean(axis=0)
    assert np.all(np.einsum("ij,ij->i", normals, midpoints - center) > 0)


def test_closed_volume_boundary_is_watertight():
    boundary = extract_boundary(box(n=(2, 2, 2)))
    edges = np.sort(boundary.facets[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert np.all(counts == 2)


def test_non_manifold_facet_is_rejected():
    positions = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]])
    mesh, _ = build_mesh(positions, [[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    with pytest.raises(MeshError):
        extract_boundary(mesh)


def test_lumped_mass_unit_tet(unit_tet):
    np.testing.assert_allclose(lumped_mass(unit_tet, 1.0).values, np.full(4, 1.0 / 24.0))


def test_lumped_mass_unit_square(unit_square):
    assert lumped_mass(unit_square, 2.0).total == pytest.approx(2.0)


def test_lumped_mass_total_matches_volume():
    mesh = box(size=(0.3, 0.7, 1.1), n=(2, 1, 2))
    density = 750.0
    mass = lumped_mass(mesh, density)
    assert np.all(mass.values > 0)
    expected = density * rest_volumes(mesh).sum()
    assert abs(mass.total - expected) <= 1e-12 * expected


def test_lumped_mass_per_element_density():
    mesh = rectangle(nx=2, ny=1)
    density = np.linspace(100.0, 400.0, mesh.n_elements)
    mass = lumped_mass(mesh, density)
    share = density * rest_volumes(mesh) / 3.0
    expected = np.zeros(mesh.n_vertices)
    np.add.at(expected, mesh.elements, share[:, None])
    np.testing.assert_allclose(mass.values, expected, rtol=1e-12)
    uniform = lumped_mass(mesh, 250.0).values
    np.testing.assert_allclose(mass.values.sum(), uniform.sum(), rtol=1e-12)


def test_boundary_facets_belong_to_their_parent():
    mesh = rectangle(nx=3, ny=2)
    boundary = extract_boundary(mesh)
    assert boundary.n_facets == 10
    keys = np.sort(mesh.elements[boundary.parent_elements], axis=1)
    assert all(set(f) <= set(k) for f, k in zip(boundary.facets.tolist(), keys.tolist()))


def test_lumped_mass_rejects_non_positive_density(unit_square):
    with pytest.raises(MeshError):
        lumped_mass(unit_square, 0.0)


@given(st.permutations(list(range(15))))
def test_lumped_mass_total_is_permutation_invariant(order):
    base = rectangle(nx=4, ny=2)
    order = np.array(order)
    inverse = np.argsort(order)
    permuted, _ = build_mesh(base.rest_positions[order], inverse[base.elements])
    assert lumped_mass(permuted, 3.0).total == pytest.approx(lumped_mass(base, 3.0).total, rel=1e-12)


def test_adjacency_single_tet_is_complete(unit_tet):
    vv = adjacency(unit_tet).vertex_vertex.toarray()
    np.testing.assert_array_equal(vv, ~np.eye(4, dtype=bool))


def test_adjacency_face_sharing_tets(two_tets):
    ee = adjacency(two_tets).element_element
    assert ee.nnz == 2
    assert ee[0, 1] and ee[1, 0]


def test_adjacency_triangle_path():
    positions = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
    mesh, _ = build_mesh(positions, [[0, 1, 2], [1, 3, 2], [1, 4, 3]])
    adj = adjacency(mesh)
    assert adj.element_element.nnz == 4
    np.testing.assert_array_equal(adj.element_neighbors(1), [0, 2])
    assert list(adj.element_neighbors(0)) == [1]


def test_adjacency_is_deterministic(slab):
    a, b = adjacency(slab), adjacency(slab)
    assert (a.vertex_vertex != b.vertex_vertex).nnz == 0
    assert (a.element_element != b.element_element).nnz == 0
