from pathlib import Path

import numpy as np
import pytest

from models.errors import HierarchyError
from pipeline.binding import bind_containment, bind_reverse
from pipeline.hierarchy import (
    boundary_epsilon,
    boundary_offsets,
    generated_hierarchy,
    level_connectivity_ok,
    load_hierarchy,
    load_manifest,
    save_hierarchy,
    synthesize_test_hierarchy,
    validate_levels,
)
from pipeline.mesh_ops import extract_boundary, rest_volumes
from pipeline.shapes import box, rectangle, single_tet, single_triangle

SCENES = Path(__file__).resolve().parent.parent / "scenes"


def test_red_refinement_counts_2d():
    hierarchy = synthesize_test_hierarchy(single_triangle(), 3)
    assert hierarchy.counts() == [3, 6, 15]
    assert [m.n_elements for m in hierarchy.levels] == [1, 4, 16]


def test_red_refinement_preserves_volume_3d():
    hierarchy = synthesize_test_hierarchy(single_tet(), 3)
    assert [m.n_elements for m in hierarchy.levels] == [1, 8, 64]
    for mesh in hierarchy.levels:
        volumes = rest_volumes(mesh)
        assert np.all(volumes > 0)
        assert volumes.sum() == pytest.approx(1.0 / 6.0)


def test_jitter_moves_the_boundary_both_ways():
    base = rectangle(nx=2, ny=1)
    hierarchy = synthesize_test_hierarchy(base, 2, jitter=0.2, seed=11)
    coarse, fine = hierarchy[0], hierarchy[1]
    assert np.all(rest_volumes(fine) > 0)
    # inherited vertices move too
    assert np.abs(fine.rest_positions[:base.n_vertices] - base.rest_positions).max() > 0
    _, outside = bind_containment(fine, coarse)
    assert len(outside) > 0


def test_jitter_exercises_reverse_extrapolation():
    extrapolated = []
    for seed in range(10):
        hierarchy = synthesize_test_hierarchy(rectangle(nx=2, ny=1), 2, jitter=0.3, seed=seed)
        extrapolated.append(bind_reverse(hierarchy[0], hierarchy[1]).n_extrapolated)
    assert sum(extrapolated) > 0


def test_boundary_offsets_are_zero_mean():
    mesh = rectangle(nx=4, ny=2)
    offsets = boundary_offsets(mesh, extract_boundary(mesh).facets, np.random.default_rng(0))
    assert offsets.mean() == pytest.approx(0.0, abs=1e-12)
    assert np.abs(offsets).max() == pytest.approx(1.0)
    assert offsets.min() < 0 < offsets.max()


def test_jitter_is_seeded():
    a = synthesize_test_hierarchy(rectangle(nx=2, ny=1), 2, jitter=0.1, seed=5)
    b = synthesize_test_hierarchy(rectangle(nx=2, ny=1), 2, jitter=0.1, seed=5)
    np.testing.assert_array_equal(a[1].rest_positions, b[1].rest_positions)


@pytest.mark.parametrize("jitter", [-0.1, 0.5])
def test_jitter_out_of_range(jitter):
    with pytest.raises(HierarchyError):
        synthesize_test_hierarchy(single_triangle(), 2, jitter=jitter)


def test_synthesis_needs_two_levels():
    with pytest.raises(HierarchyError):
        synthesize_test_hierarchy(single_triangle(), 1)


def test_disjoint_levels_are_rejected():
    far = rectangle(origin=(5.0, 5.0))
    with pytest.raises(HierarchyError, match="do not overlap"):
        validate_levels([rectangle(), far])


def test_mixed_dimensions_are_rejected():
    with pytest.raises(HierarchyError):
        validate_levels([rectangle(), box()])


def test_single_level_is_valid():
    hierarchy = validate_levels([rectangle(nx=2, ny=2)])
    assert len(hierarchy) == 1 and hierarchy.finest == 0
    assert hierarchy.stats[0].epsilon is None


def test_nested_levels_have_zero_epsilon():
    hierarchy = generated_hierarchy("rectangle", {}, per_level=[{"nx": 2, "ny": 2}, {"nx": 4, "ny": 4}])
    assert hierarchy.stats[0].epsilon == pytest.approx(0.0, abs=1e-12)
    assert boundary_epsilon(hierarchy[0], hierarchy[1]) == pytest.approx(0.0, abs=1e-12)


def test_saved_hierarchy_reloads_exactly(tmp_path):
    hierarchy = synthesize_test_hierarchy(rectangle(nx=2, ny=1), 3, jitter=0.1, seed=2)
    reloaded = load_manifest(save_hierarchy(hierarchy, tmp_path))
    assert reloaded.labels == hierarchy.labels
    for a, b in zip(hierarchy.levels, reloaded.levels):
        np.testing.assert_array_equal(a.rest_positions, b.rest_positions)
        np.testing.assert_array_equal(a.elements, b.elements)


def test_missing_manifest(tmp_path):
    with pytest.raises(HierarchyError):
        load_manifest(tmp_path / "nope.yaml")


def test_manifest_without_levels(tmp_path):
    path = tmp_path / "hierarchy.yaml"
    path.write_text("levels: []\n")
    with pytest.raises(HierarchyError):
        load_manifest(path)


def test_bundled_square_manifest():
    hierarchy = load_manifest(SCENES / "meshes" / "square.yaml")
    assert hierarchy.counts() == [4, 9]
    assert hierarchy.labels == ["coarse", "fine"]
    assert extract_boundary(hierarchy[1]).n_facets == 8


def test_generated_hierarchy_needs_a_recipe():
    with pytest.raises(HierarchyError):
        generated_hierarchy("rectangle", {})


def test_connectivity_check():
    assert level_connectivity_ok(rectangle(nx=3, ny=2))


def test_load_hierarchy_from_paths():
    meshes = SCENES / "meshes"
    hierarchy = load_hierarchy([meshes / "square_0.obj", meshes / "square_1.obj"], labels=["c", "f"])
    assert [m.n_vertices for m in hierarchy.levels] == [4, 9]
    assert hierarchy.labels == ["c", "f"]
    with pytest.raises(HierarchyError):
        load_hierarchy([meshes / "square_0.obj"])
