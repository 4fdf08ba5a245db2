import numpy as np
import pytest

from models.contact import BarrierParams, HalfPlane, StaticMesh
from models.errors import ConfigError, InfeasibleStateError
from pipeline.contact import (
    ContactModel,
    barrier,
    barrier_first,
    barrier_second,
    contact_pairs,
    smoothed_magnitude,
)
from pipeline.mesh_ops import build_mesh, extract_boundary
from pipeline.shapes import single_tet, single_triangle

DHAT = 0.1


@pytest.fixture
def triangle():
    positions = np.array([[0.0, 0.03], [0.5, 0.03], [0.0, 0.53]])
    return build_mesh(positions, [[0, 1, 2]])[0]


def model(mesh, colliders, **params):
    params = {"dhat": DHAT, "kappa": 1.0, **params}
    return ContactModel(mesh, extract_boundary(mesh), colliders, BarrierParams(**params))


def floor():
    return HalfPlane(np.array([0.0, 1.0]), 0.0)


def ledge(friction=None):
    return StaticMesh(np.array([[-1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1]]), friction=friction, open=True)


def fd_gradient(f, x, step=1e-7):
    flat = x.ravel()
    out = np.zeros(flat.size)
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += step
        minus[i] -= step
        out[i] = (f(plus.reshape(x.shape)) - f(minus.reshape(x.shape))) / (2 * step)
    return out


def fd_hessian(grad, x, step=1e-7):
    flat = x.ravel()
    out = np.zeros((flat.size, flat.size))
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += step
        minus[i] -= step
        out[:, i] = (grad(plus.reshape(x.shape)) - grad(minus.reshape(x.shape))) / (2 * step)
    return out


def test_barrier_vanishes_at_dhat():
    d = np.array([DHAT, 2 * DHAT])
    np.testing.assert_array_equal(barrier(d, DHAT), 0.0)
    np.testing.assert_array_equal(barrier_first(d, DHAT), 0.0)
    assert barrier(np.array([0.0]), DHAT)[0] == np.inf
    assert barrier(np.array([-1e-3]), DHAT)[0] == np.inf


@pytest.mark.parametrize("d", [1e-3, 0.02, 0.07])
def test_barrier_derivatives(d):
    step = 1e-8
    fd1 = (barrier(np.array([d + step]), DHAT) - barrier(np.array([d - step]), DHAT)) / (2 * step)
    fd2 = (barrier_first(np.array([d + step]), DHAT) - barrier_first(np.array([d - step]), DHAT)) / (2 * step)
    assert barrier_first(np.array([d]), DHAT)[0] == pytest.approx(fd1[0], rel=1e-5)
    assert barrier_second(np.array([d]), DHAT)[0] == pytest.approx(fd2[0], rel=1e-5)
    assert barrier_first(np.array([d]), DHAT)[0] < 0 < barrier_second(np.array([d]), DHAT)[0]


def test_smoothed_magnitude_is_c1_at_eps():
    eps = 1e-3
    below, above = smoothed_magnitude(np.array([eps - 1e-12]), eps), smoothed_magnitude(np.array([eps]), eps)
    assert below[0] == pytest.approx(above[0], rel=1e-6)
    assert smoothed_magnitude(np.array([0.0]), eps)[0] == pytest.approx(eps / 3.0)


def test_plane_pairs_and_gradient(triangle):
    contact = model(triangle, [floor()])
    pairs = contact.active_pairs(triangle.rest_positions)
    assert pairs.n_plane == 2 and pairs.n_facet == 0
    x = triangle.rest_positions.copy()

    def energy(y):
        return contact.barrier_energy(y, pairs, need_hessian=False)[0]

    value, grad, hess = contact.barrier_energy(x, pairs)
    assert value > 0
    np.testing.assert_allclose(grad, fd_gradient(energy, x), rtol=1e-5, atol=1e-9)
    H_fd = fd_hessian(lambda y: contact.barrier_energy(y, pairs, need_hessian=False)[1], x)
    np.testing.assert_allclose(hess.toarray(), H_fd, rtol=1e-4, atol=1e-6 * np.abs(H_fd).max())


def test_static_facet_pairs_and_gradient(triangle):
    contact = model(triangle, [ledge()])
    x = triangle.rest_positions.copy()
    pairs = contact.active_pairs(x)
    assert pairs.n_plane == 0
    assert sorted(pairs.points.tolist()) == [0, 1]

    value, grad, hess = contact.barrier_energy(x, pairs, project=False)
    np.testing.assert_allclose(grad, fd_gradient(lambda y: contact.barrier_energy(y, pairs, False)[0], x),
                               rtol=1e-5, atol=1e-9)
    H_fd = fd_hessian(lambda y: contact.barrier_energy(y, pairs, False)[1], x)
    np.testing.assert_allclose(hess.toarray(), H_fd, rtol=1e-4, atol=1e-6 * np.abs(H_fd).max())


def test_barrier_is_infinite_when_penetrating(triangle):
    contact = model(triangle, [floor()])
    pairs = contact.active_pairs(triangle.rest_positions)
    below = triangle.rest_positions - np.array([0.0, 0.05])
    assert contact.barrier_energy(below, pairs)[0] == np.inf


def test_self_contact_skips_incident_facets():
    mesh = single_triangle()
    contact = ContactModel(mesh, extract_boundary(mesh), [], BarrierParams(dhat=10.0, self_contact=True))
    pairs = contact.collect(mesh.rest_positions, radius=10.0)
    assert pairs.n_facet == 3
    assert not np.any(pairs.facets == pairs.points[:, None])


def test_min_distance(triangle):
    assert model(triangle, []).min_distance(triangle.rest_positions) == np.inf
    assert model(triangle, [floor()]).min_distance(triangle.rest_positions) == pytest.approx(0.03)
    assert model(triangle, [ledge()]).min_distance(triangle.rest_positions) == pytest.approx(0.03)


def test_static_obstacle_dimension_mismatch(triangle):
    tet_surface = StaticMesh(np.eye(3), np.array([[0, 1, 2]]), open=True)
    with pytest.raises(ConfigError):
        model(triangle, [tet_surface])


def test_closed_static_mesh_must_be_watertight():
    with pytest.raises(ConfigError):
        StaticMesh(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), np.array([[0, 1], [1, 2]]))


def test_step_bound_against_a_plane(triangle):
    x = triangle.rest_positions + np.array([0.0, 0.47])   # lowest vertices at 0.5
    dx = np.tile([0.0, -1.0], (3, 1))
    assert model(triangle, [floor()]).feasible_step_upper_bound(x, dx) == pytest.approx(0.45)


def test_step_bound_against_a_static_facet(triangle):
    x = triangle.rest_positions + np.array([0.0, 0.47])
    dx = np.tile([0.0, -1.0], (3, 1))
    assert model(triangle, [ledge()]).feasible_step_upper_bound(x, dx) == pytest.approx(0.45, rel=1e-6)


def test_step_bound_for_separating_motion(triangle):
    dx = np.tile([0.0, 1.0], (3, 1))
    assert model(triangle, [floor(), ledge()]).feasible_step_upper_bound(triangle.rest_positions, dx) == pytest.approx(1.0)


def test_step_bound_rejects_an_infeasible_state(triangle):
    x = triangle.rest_positions - np.array([0.0, 0.1])
    with pytest.raises(InfeasibleStateError):
        model(triangle, [floor()]).feasible_step_upper_bound(x, np.ones_like(x))


def test_friction_lag_keeps_frictional_pairs(triangle):
    x = triangle.rest_positions
    assert model(triangle, [floor()]).friction_lag(x).is_empty
    lag = model(triangle, [floor()], mu=0.5).friction_lag(x)
    assert lag.pairs.n_plane == 2
    assert np.all(lag.plane_force > 0)
    mixed = model(triangle, [HalfPlane(np.array([0.0, 1.0]), 0.0, friction=0.0), ledge(friction=0.3)])
    lag = mixed.friction_lag(x)
    assert lag.pairs.n_plane == 0 and lag.pairs.n_facet == 2


@pytest.mark.parametrize("slide", [4e-4, 5e-3])
@pytest.mark.parametrize("colliders", [[floor()], [ledge()]], ids=["plane", "facet"])
def test_friction_derivatives(triangle, slide, colliders):
    contact = model(triangle, colliders, mu=0.5, eps_v=1e-2)
    h = 0.1
    eps = contact.params.eps_v * h
    x_lag = triangle.rest_positions
    lag = contact.friction_lag(x_lag)
    x = x_lag + np.array([[slide, 1e-5], [0.7 * slide, -2e-5], [0.2 * slide, 0.0]])

    value, grad, hess = contact.friction_potential(x, lag, h)
    assert value > 0
    np.testing.assert_allclose(
        grad, fd_gradient(lambda y: contact.friction_potential(y, lag, h, False)[0], x, step=1e-9),
        rtol=1e-4, atol=1e-6 * np.abs(grad).max(),
    )
    # curvature in the sticking band is about |grad| / eps
    curvature = np.abs(grad).max() / eps
    H_fd = fd_hessian(lambda y: contact.friction_potential(y, lag, h, False)[1], x, step=1e-9)
    np.testing.assert_allclose(hess.toarray(), H_fd, rtol=1e-3, atol=1e-6 * curvature)
    if 0.7 * slide > eps:
        # planar sliding: the tangent space is one-dimensional, so I - u u^T / |u|^2 vanishes
        assert np.abs(hess.toarray()).max() <= 1e-9 * curvature


def test_friction_vanishes_without_sliding(triangle):
    contact = model(triangle, [floor()], mu=0.5)
    lag = contact.friction_lag(triangle.rest_positions)
    value, grad, _ = contact.friction_potential(triangle.rest_positions, lag, 0.01)
    np.testing.assert_allclose(grad, 0.0)
    assert value == pytest.approx(float(np.sum(0.5 * lag.plane_force)) * 1e-3 * 0.01 / 3.0)


def test_3d_plane_pairs():
    mesh = single_tet(0.5)
    x = mesh.rest_positions + np.array([0.0, 0.0, 0.05])
    contact = ContactModel(mesh, extract_boundary(mesh), [HalfPlane(np.array([0.0, 0.0, 1.0]), 0.0)],
                           BarrierParams(dhat=0.1))
    pairs = contact_pairs(x, mesh, extract_boundary(mesh), contact.planes, contact.params)
    assert pairs.n_plane == 3
