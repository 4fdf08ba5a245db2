import hypothesis
import numpy as np
import pytest

from pipeline.mesh_ops import build_mesh
from pipeline.shapes import disk, rectangle, single_tet, single_triangle

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("fast")


@pytest.fixture
def unit_square():
    """Two triangles covering [0, 1]^2."""
    positions = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return build_mesh(positions, [[0, 1, 2], [0, 2, 3]])[0]


@pytest.fixture
def unit_tet():
    return single_tet()


@pytest.fixture
def unit_triangle():
    return single_triangle()


@pytest.fixture
def two_tets():
    """Two tetrahedra sharing the face (1, 2, 3)."""
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]])
    return build_mesh(positions, [[0, 1, 2, 3], [1, 2, 3, 4]])[0]


@pytest.fixture
def slab():
    return rectangle(width=1.0, height=0.5, nx=4, ny=2)


@pytest.fixture
def small_disk():
    return disk(radius=0.5, rings=2)


def _scene_data(**overrides):
    data = {
        "name": "small",
        "hierarchy": {"generate": {
            "shape": "rectangle",
            "params": {"width": 0.6, "height": 0.3, "origin": [-0.3, 0.05]},
            "per_level": [{"nx": 2, "ny": 1}, {"nx": 4, "ny": 2}],
        }},
        "time": {"h": 0.01, "steps": 8},
        "gravity": [0.0, -9.81],
        "materials": {"rubber": {"young": 5.0e4, "poisson": 0.4, "density": 500.0}},
        "initial": {"velocity": [0.2, 0.0], "angular_velocity": 3.0},
    }
    data.update(overrides)
    return data


@pytest.fixture
def scene_data():
    """Factory for a small two-level rectangle scene as a plain dict."""
    return _scene_data


@pytest.fixture
def make_scene():
    from models.scene import scene_from_dict

    return lambda **overrides: scene_from_dict(_scene_data(**overrides))


@pytest.fixture
def make_system(make_scene):
    from pipeline.scene_builder import build_scene

    return lambda **overrides: build_scene(make_scene(**overrides))


@pytest.fixture
def scene_file(tmp_path):
    """Factory writing the small scene (with overrides) to a YAML file."""
    import yaml

    def write(name="scene.yaml", **overrides):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(_scene_data(**overrides)))
        return path

    return write
