import numpy as np
import pytest

from models.binding import BindingStatus
from models.errors import BindingError
from pipeline.binding import (
    audit_binding,
    barycentric_in_element,
    bind_containment,
    bind_naive_closest,
    bind_reverse,
    bind_robust,
    containment_brute_force,
    load_binding,
    save_binding,
)
from pipeline.hierarchy import synthesize_test_hierarchy
from pipeline.mesh_ops import element_centroids
from pipeline.shapes import box, disk, rectangle, single_tet, u_shape


@pytest.fixture
def u_pair():
    """
    Coarse U with a slot x in (1, 2); the fine U has a thicker left arm reaching x = 1.6,
    so its slot-side vertices sit closer to the right arm than to their own.
    """
    coarse = u_shape([0, 1, 2, 3], [0, 1, 2, 3], gap=(1.0, 2.0), floor=1.0)
    fine = u_shape([0, 0.5, 1, 1.6, 2, 2.5, 3], [0, 0.5, 1, 1.5, 2, 2.5, 3], gap=(1.6, 2.0), floor=1.0)
    return fine, coarse


def reconstruct(binding, coarse):
    corners = coarse.rest_positions[coarse.elements[binding.hosts]]
    return np.einsum("vk,vkd->vd", binding.coords, corners)


def test_nested_levels_bind_inside():
    coarse = rectangle(nx=2, ny=2)
    fine = rectangle(nx=6, ny=6)
    binding = bind_robust(fine, coarse)
    assert np.all(binding.status == BindingStatus.INSIDE)
    assert binding.coords.min() >= 0.0
    np.testing.assert_allclose(reconstruct(binding, coarse), fine.rest_positions, atol=1e-12)


def test_nested_tets_bind_inside():
    hierarchy = synthesize_test_hierarchy(single_tet(), 2)
    binding = bind_robust(hierarchy[1], hierarchy[0])
    assert binding.summary()["inside"] == 10
    np.testing.assert_allclose(np.abs(binding.coords.sum(axis=1) - 1.0), 0.0, atol=1e-12)


def test_containment_matches_brute_force():
    coarse = disk(radius=1.0, rings=2)
    fine = disk(radius=1.05, rings=5)
    binding, unassigned = bind_containment(fine, coarse)
    expected = containment_brute_force(fine, coarse)
    np.testing.assert_array_equal(binding.hosts, expected)
    np.testing.assert_array_equal(unassigned, np.nonzero(expected < 0)[0])


def test_exterior_vertices_reproduce_rest_positions():
    coarse = disk(radius=1.0, rings=2)
    fine = disk(radius=1.05, rings=5)
    binding = bind_robust(fine, coarse)
    binding.validate()
    assert binding.n_extrapolated > 0
    np.testing.assert_allclose(reconstruct(binding, coarse), fine.rest_positions, atol=1e-10)


def test_robust_binding_stays_on_its_own_arm(u_pair):
    fine, coarse = u_pair
    binding = bind_robust(fine, coarse)
    slot_side = np.nonzero(np.isclose(fine.rest_positions[:, 0], 1.6) & (fine.rest_positions[:, 1] > 1.0))[0]
    assert len(slot_side) == 4
    assert np.all(binding.status[slot_side] == BindingStatus.EXTRAPOLATED)
    hosts_x = element_centroids(coarse)[binding.hosts[slot_side], 0]
    assert np.all(hosts_x < 2.0)
    assert audit_binding(fine, coarse, binding).n_flagged == 0


def test_naive_binding_jumps_the_slot(u_pair):
    fine, coarse = u_pair
    naive = bind_naive_closest(fine, coarse)
    audit = audit_binding(fine, coarse, naive)
    assert audit.n_flagged >= 1
    far_arm = element_centroids(coarse)[naive.hosts[audit.flagged], 0]
    assert np.all(far_arm > 2.0)
    assert audit.to_dict()["max_distance"] > audit.threshold


def test_reverse_binding_is_complete():
    hierarchy = synthesize_test_hierarchy(rectangle(nx=2, ny=1), 2, jitter=0.2, seed=4)
    binding = bind_reverse(hierarchy[0], hierarchy[1])
    assert binding.is_complete
    assert binding.n_vertices == hierarchy[0].n_vertices


def test_dimension_mismatch():
    with pytest.raises(BindingError):
        bind_robust(box(), rectangle())


def test_binding_text_file(tmp_path):
    coarse = disk(radius=1.0, rings=2)
    fine = disk(radius=1.05, rings=3)
    binding = bind_robust(fine, coarse)
    loaded = load_binding(save_binding(binding, tmp_path / "binding.txt"))
    np.testing.assert_array_equal(loaded.hosts, binding.hosts)
    np.testing.assert_array_equal(loaded.status, binding.status)
    np.testing.assert_array_equal(loaded.coords, binding.coords)


def test_validate_rejects_incomplete_map():
    binding, unassigned = bind_containment(disk(radius=1.2, rings=3), disk(radius=1.0, rings=2))
    assert len(unassigned)
    with pytest.raises(BindingError):
        binding.validate()


def test_barycentric_in_element(unit_triangle, unit_tet):
    np.testing.assert_allclose(barycentric_in_element(unit_triangle, 0, [0.2, 0.3]), [0.5, 0.2, 0.3])
    np.testing.assert_allclose(barycentric_in_element(unit_tet, 0, [0.25, 0.25, 0.25]), [0.25] * 4)
    outside = barycentric_in_element(unit_triangle, 0, [1.0, 1.0])
    assert outside.sum() == pytest.approx(1.0) and outside.min() < 0


def test_barycentric_uses_element_corners():
    mesh = rectangle(nx=4, ny=4)
    assert mesh.n_elements > mesh.n_vertices
    centroids = element_centroids(mesh)
    for element in (1, mesh.n_vertices + 2, mesh.n_elements - 1):
        np.testing.assert_allclose(barycentric_in_element(mesh, element, centroids[element]), [1 / 3] * 3)
    tet = single_tet()
    np.testing.assert_allclose(barycentric_in_element(tet, 0, tet.rest_positions.mean(axis=0)), [0.25] * 4)
