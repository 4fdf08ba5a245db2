import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from models.errors import ProlongationError
from models.prolongation import ProlongationKind, ProlongationOperator
from pipeline.binding import bind_robust
from pipeline.hierarchy import generated_hierarchy, synthesize_test_hierarchy
from pipeline.prolongation import (
    build_barycentric,
    build_operator,
    build_operators,
    build_phong,
    export_matrix_market,
    norm_report,
    projection,
    prolong,
)
from pipeline.shapes import disk, rectangle, single_tet

finite = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


@pytest.fixture
def nested():
    return generated_hierarchy("rectangle", {}, per_level=[{"nx": 2, "ny": 2}, {"nx": 5, "ny": 5}])


@pytest.fixture
def overhanging():
    """Fine disk larger than the coarse one: some weights are extrapolated."""
    return disk(radius=1.05, rings=4), disk(radius=1.0, rings=2)


def test_barycentric_reproduces_rest_positions(nested):
    coarse, fine = nested[0], nested[1]
    op = build_operator(fine, coarse, "barycentric")
    assert op.kind == ProlongationKind.BARYCENTRIC
    np.testing.assert_allclose(prolong(op, coarse.rest_positions), fine.rest_positions, atol=1e-12)
    np.testing.assert_allclose(op.row_sums(), 1.0, atol=1e-12)


def test_barycentric_diagnostics_for_nonnegative_weights(nested):
    op = build_operator(nested[1], nested[0], "bary")
    diag = op.diagnostics
    assert not diag.has_negative
    assert diag.bound_violated is False
    assert diag.frobenius_norm <= np.sqrt(nested[1].n_vertices) + 1e-12
    assert diag.two_norm_estimate <= diag.frobenius_norm + 1e-9
    assert diag.min_entry >= 0.0


def test_extrapolated_weights_skip_the_bound(overhanging):
    fine, coarse = overhanging
    op = build_operator(fine, coarse, ProlongationKind.BARYCENTRIC)
    assert op.diagnostics.has_negative
    assert op.diagnostics.bound_violated is None
    np.testing.assert_allclose(prolong(op, coarse.rest_positions), fine.rest_positions, atol=1e-10)


@given(arrays(np.float64, (2, 2), elements=finite), arrays(np.float64, 2, elements=finite))
def test_phong_reproduces_affine_maps(A, b):
    fine, coarse = disk(radius=1.05, rings=3), disk(radius=1.0, rings=2)
    op = build_phong(bind_robust(fine, coarse), fine, coarse, blend=1.0)
    mapped = prolong(op, coarse.rest_positions @ A.T + b)
    np.testing.assert_allclose(mapped, fine.rest_positions @ A.T + b, atol=1e-9)


def test_phong_blend_zero_equals_barycentric(overhanging):
    fine, coarse = overhanging
    binding = bind_robust(fine, coarse)
    phong = build_phong(binding, fine, coarse, blend=0.0)
    bary = build_barycentric(binding, coarse)
    assert phong.kind == ProlongationKind.PHONG
    assert abs(phong.weights - bary.weights).max() == 0.0


def test_phong_rows_sum_to_one(overhanging):
    fine, coarse = overhanging
    op = build_operator(fine, coarse, "phong", blend=0.5)
    np.testing.assert_allclose(op.row_sums(), 1.0, atol=1e-10)
    assert op.extra["blend"] == 0.5


def test_phong_blend_out_of_range(nested):
    with pytest.raises(ProlongationError):
        build_phong(bind_robust(nested[1], nested[0]), nested[1], nested[0], blend=1.5)


def test_phong_on_tets_reproduces_rest_positions():
    hierarchy = synthesize_test_hierarchy(single_tet(), 2, jitter=0.1, seed=1)
    op = build_operator(hierarchy[1], hierarchy[0], "phong", blend=1.0)
    np.testing.assert_allclose(prolong(op, hierarchy[0].rest_positions), hierarchy[1].rest_positions, atol=1e-10)


def test_biharmonic_interpolates_coarse_vertices(nested):
    coarse, fine = nested[0], nested[1]
    op = build_operator(fine, coarse, "biharmonic")
    assert op.kind == ProlongationKind.BIHARMONIC
    assert op.extra["constraint_residual"] < 1e-8
    np.testing.assert_allclose(op.row_sums(), 1.0, atol=1e-8)
    assert 0.0 < op.extra["support_fraction"] <= 1.0


def test_projection_is_a_left_inverse(overhanging):
    fine, coarse = overhanging
    op = build_operator(fine, coarse, "barycentric")
    field = np.random.default_rng(3).normal(size=(coarse.n_vertices, 2))
    np.testing.assert_allclose(projection(op)(prolong(op, field)), field, atol=1e-9)


def test_projection_rejects_empty_columns():
    op = ProlongationOperator(sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0]])), ProlongationKind.BARYCENTRIC)
    with pytest.raises(ProlongationError) as info:
        projection(op)
    assert info.value.rank == 1


def test_prolong_checks_shapes(nested):
    op = build_operator(nested[1], nested[0], "barycentric")
    with pytest.raises(ProlongationError):
        prolong(op, np.zeros((nested[0].n_vertices + 1, 2)))


def test_identity_norms():
    op = ProlongationOperator(sp.identity(5, format="csr"), ProlongationKind.BARYCENTRIC)
    diag = norm_report(op, power_iters=20)
    assert diag.frobenius_norm == pytest.approx(np.sqrt(5.0))
    assert diag.two_norm_estimate == pytest.approx(1.0)
    assert diag.row_sum_max_dev == 0.0


def test_operators_for_every_level_pair():
    hierarchy = generated_hierarchy("rectangle", {}, per_level=[{"nx": 1, "ny": 1}, {"nx": 2, "ny": 2},
                                                                {"nx": 4, "ny": 3}])
    operators = build_operators(hierarchy, "barycentric")
    assert [op.shape for op in operators] == [(9, 4), (20, 9)]
    assert operators[0].diagnostics.epsilon == hierarchy.stats[0].epsilon


def test_matrix_market_export(tmp_path, nested):
    op = build_operator(nested[1], nested[0], "barycentric")
    path = export_matrix_market(op, tmp_path / "P.mtx")
    loaded = sp.csr_matrix(scipy.io.mmread(str(path)))
    assert abs(loaded - op.weights).max() < 1e-12


def test_kind_parsing():
    assert ProlongationKind.parse("bary") is ProlongationKind.BARYCENTRIC
    assert ProlongationKind.parse("Phong") is ProlongationKind.PHONG
    with pytest.raises(ValueError):
        ProlongationKind.parse("cubic")
