import numpy as np
import pytest
import scipy.sparse as sp

from models.errors import GridDependencyError
from models.grid import SolutionGrid
from models.mesh import LumpedMass
from models.prolongation import ProlongationKind, ProlongationOperator
from pipeline.integrator import LevelDynamics
from pipeline.mesh_ops import lumped_mass
from pipeline.metrics import (
    CONSISTENCY_COLUMNS,
    CONTINUITY_COLUMNS,
    centers_of_mass,
    com_divergence,
    consistency_error,
    consistency_rows,
    continuity_error,
    emit_traces,
    mean_divergence,
    read_trace,
)
from pipeline.progressive import run_embedded, run_progressive
from pipeline.prolongation import projection

G = np.array([0.0, -9.81])


def gravity_only(mesh, h):
    return LevelDynamics(mesh=mesh, mass=lumped_mass(mesh, 2.0), h=h, gravity=G)


def test_free_fall_has_zero_continuity_error(slab):
    h, steps = 0.01, 10
    v0 = np.tile([0.3, 0.1], (slab.n_vertices, 1))
    t = np.arange(steps + 1)[:, None, None]
    row = slab.rest_positions[None] + h * t * v0[None] + h ** 2 * G * t * (t + 1) / 2.0
    grid = SolutionGrid.from_rows([row], h, [v0])
    dynamics = gravity_only(slab, h)
    for step in range(1, steps):
        e, _, _ = continuity_error(grid, 0, step, dynamics)
        assert e == pytest.approx(0.0, abs=1e-12)


def test_direct_stencil_normalizes_to_a_quarter(slab):
    h = 0.05
    rng = np.random.default_rng(5)
    row = slab.rest_positions[None] + 0.01 * rng.standard_normal((3, slab.n_vertices, 2))
    grid = SolutionGrid.from_rows([row], h, [np.zeros((slab.n_vertices, 2))])
    e, e_hat, n = continuity_error(grid, 0, 1, gravity_only(slab, h))
    assert e > 0
    assert e == pytest.approx(0.25 * e_hat, rel=1e-9)
    assert n == pytest.approx(0.25, rel=1e-9)


def test_continuity_is_invariant_to_mass_scale(slab):
    h = 0.05
    rng = np.random.default_rng(9)
    row = slab.rest_positions[None] + 0.01 * rng.standard_normal((3, slab.n_vertices, 2))
    target = row[1] + 0.003
    grid = SolutionGrid.from_rows([row], h, [np.zeros((slab.n_vertices, 2))], targets=[[None, target]])
    light = gravity_only(slab, h)
    heavy = LevelDynamics(mesh=slab, mass=LumpedMass(light.mass.values * 7.0), h=h, gravity=G)
    assert continuity_error(grid, 0, 1, light)[2] == pytest.approx(continuity_error(grid, 0, 1, heavy)[2], rel=1e-9)


def test_continuity_step_range(slab):
    row = np.stack([slab.rest_positions] * 3)
    grid = SolutionGrid.from_rows([row], 0.01, [np.zeros_like(slab.rest_positions)])
    dynamics = gravity_only(slab, 0.01)
    for t in (0, 2):
        with pytest.raises(GridDependencyError):
            continuity_error(grid, 0, t, dynamics)


def test_equilibrium_trajectory_has_zero_error(slab):
    row = np.stack([slab.rest_positions] * 4)
    grid = SolutionGrid.from_rows([row], 0.01, [np.zeros_like(slab.rest_positions)])
    dynamics = LevelDynamics(mesh=slab, mass=lumped_mass(slab, 1.0), h=0.01, gravity=np.zeros(2))
    e, e_hat, _ = continuity_error(grid, 0, 1, dynamics)
    assert e == 0.0
    assert e_hat > 0.0


def test_embedded_runs_are_consistent(make_system):
    system = make_system()
    grid = run_embedded(system)
    rows = consistency_rows(grid, system.levels, system.operators())
    assert len(rows) == system.config.steps
    assert max(row[2] for row in rows) < 1e-9


def test_consistency_with_identity_operator():
    x_coarse = np.array([[0.0, 0.0], [1.0, 0.0]])
    x_fine = np.array([[0.0, 1.0], [1.0, 0.0]])
    grid = SolutionGrid.from_rows([x_coarse[None], x_fine[None]], 0.1, [np.zeros((2, 2))] * 2)
    P = ProlongationOperator(sp.identity(2, format="csr"), ProlongationKind.BARYCENTRIC)
    mass = LumpedMass(np.array([3.0, 1.0]))
    assert consistency_error(grid, 1, 0, projection(P), mass) == pytest.approx(3.0)
    with pytest.raises(GridDependencyError):
        consistency_error(grid, 0, 0, projection(P), mass)


def test_trace_files(make_system, tmp_path):
    system = make_system()
    grid = run_progressive(system)
    paths = emit_traces(grid, system.levels, system.operators(), tmp_path / "metrics")

    continuity = read_trace(paths["continuity"])
    consistency = read_trace(paths["consistency"])
    steps = system.config.steps
    assert len(continuity) == 2 * (steps - 1)
    assert len(consistency) == steps
    assert [(r["l"], r["t"]) for r in consistency] == [(1.0, float(t)) for t in range(1, steps + 1)]
    assert all(r["e_hat"] > 0 and r["n"] >= 0 for r in continuity)
    assert all(r["d"] >= 0 for r in consistency)
    with open(paths["continuity"]) as f:
        assert f.readline().strip() == ",".join(CONTINUITY_COLUMNS)

    first = {name: path.read_bytes() for name, path in paths.items()}
    emit_traces(grid, system.levels, system.operators(), tmp_path / "metrics")
    assert {name: path.read_bytes() for name, path in paths.items()} == first


def test_empty_grid_gives_header_only_traces(make_system, tmp_path):
    system = make_system(time={"h": 0.01, "steps": 0})
    grid = run_progressive(system)
    paths = emit_traces(grid, system.levels, system.operators(), tmp_path)
    assert paths["continuity"].read_text() == ",".join(CONTINUITY_COLUMNS) + "\n"
    assert paths["consistency"].read_text() == ",".join(CONSISTENCY_COLUMNS) + "\n"


def test_centers_of_mass():
    row = np.array([[[0.0, 0.0], [4.0, 0.0]], [[1.0, 1.0], [5.0, 1.0]]])
    com = centers_of_mass(row, LumpedMass(np.array([3.0, 1.0])))
    np.testing.assert_allclose(com, [[1.0, 0.0], [2.0, 1.0]])


def test_com_divergence():
    mass = LumpedMass(np.ones(2))
    row = np.zeros((2, 2, 2))
    shifted = row + np.array([3.0, 4.0])
    grid = SolutionGrid.from_rows([row, shifted], 0.1, [np.zeros((2, 2))] * 2)
    divergence = com_divergence(grid, [mass, mass])
    assert divergence == {1: pytest.approx(5.0)}
    assert mean_divergence(divergence) == pytest.approx(5.0)
    assert mean_divergence({}) is None
