from pathlib import Path

import numpy as np
import pytest

from models.scene import load_scene
from pipeline.progressive import run_progressive
from pipeline.scene_builder import build_scene

SCENES = sorted((Path(__file__).resolve().parent.parent / "scenes").glob("*.yaml"))


@pytest.mark.parametrize("path", SCENES, ids=lambda p: p.stem)
def test_scene_loads_and_builds(path):
    scene = load_scene(path)
    assert scene.name == path.stem
    system = build_scene(scene)
    assert system.n_levels >= 2
    counts = [level.mesh.n_vertices for level in system.levels]
    assert counts == sorted(counts)
    for x0, _ in system.initial:
        assert np.all(np.isfinite(x0))


def test_identity_pair_prolongation_is_identity():
    system = build_scene(load_scene(SCENES[0].parent / "identity_pair.yaml"))
    P = system.operators()[0].weights.toarray()
    np.testing.assert_allclose(P, np.eye(len(P)), atol=1e-12)


def test_manifest_scene_levels():
    system = build_scene(load_scene(SCENES[0].parent / "square_manifest.yaml"))
    assert [level.mesh.n_vertices for level in system.levels] == [4, 9]
    assert system.operators()[0].shape == (9, 4)


def test_material_regions_in_slit_array():
    system = build_scene(load_scene(SCENES[0].parent / "slit_array.yaml"))
    for assignment in system.assignments:
        assert set(np.unique(assignment)) == {0, 1}


@pytest.mark.slow
@pytest.mark.parametrize("path", SCENES, ids=lambda p: p.stem)
def test_scene_runs_a_few_progressive_steps(path):
    system = build_scene(load_scene(path))
    system.config.steps = 3
    grid = run_progressive(system)
    assert grid.complete_levels() == list(range(system.n_levels))
    for level in range(system.n_levels):
        for report in grid.reports(level):
            assert report.converged
            assert report.min_distance > 0
