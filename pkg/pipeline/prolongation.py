"""
Prolongation - coarse-to-fine operators, projection and norm diagnostics

Phong blend assembly. For fine vertex i hosted by coarse element e with weights w_k
on corners v_k, the Phong branch is

    sum_k w_k [ x_{v_k} + F_{v_k} (X_i - X_{v_k}) ]

where F_v averages the deformation gradients of the elements around v, weighted by
rest volume. Each element gradient is F_e = sum_a x_{e_a} grad(phi_a)^T, so the whole
branch is linear in coarse positions with scalar weights per (fine, coarse) pair:

    P_phong[i, c] = sum_k w_k [ delta(c, v_k) + sum_{e' ~ v_k, e'_a = c} (vol_e' / V_{v_k}) grad(phi_a^e') . (X_i - X_{v_k}) ]

The first term is the barycentric operator, so P = P_bary + blend * (gradient term).
"""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from config import settings
from models.binding import BindingMap
from models.errors import ProlongationError
from models.hierarchy import Hierarchy
from models.mesh import SimplicialMesh
from models.prolongation import NormDiagnostics, ProlongationKind, ProlongationOperator
from pipeline.binding import bind_reverse, bind_robust
from pipeline.biharmonic import biharmonic_system, solve_biharmonic
from pipeline.mesh_ops import basis_gradients, lumped_mass, rest_volumes

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-10


def build_barycentric(binding: BindingMap, coarse: SimplicialMesh) -> ProlongationOperator:
    if not binding.is_complete:
        raise ProlongationError(f"Binding is incomplete: {len(binding.unassigned)} vertices unbound")
    n, k = binding.n_vertices, coarse.dim + 1
    rows = np.repeat(np.arange(n), k)
    cols = coarse.elements[binding.hosts].ravel()
    weights = sp.coo_matrix((binding.coords.ravel(), (rows, cols)), shape=(n, coarse.n_vertices))
    operator = ProlongationOperator(weights=weights, kind=ProlongationKind.BARYCENTRIC)
    operator.diagnostics = norm_report(operator)
    return operator


def _vertex_gradient_table(coarse: SimplicialMesh):
    """Triples (v, c, g) with F_v r = sum_c x_c (g . r), grouped by v."""
    grads, _ = basis_gradients(coarse)
    vol = rest_volumes(coarse)
    k = coarse.dim + 1
    vertex_volume = k * lumped_mass(coarse, 1.0).values

    v = np.repeat(coarse.elements, k, axis=1).ravel()        # corner k' of element
    c = np.tile(coarse.elements, (1, k)).ravel()             # corner a of element
    g = np.repeat(grads[:, None, :, :], k, axis=1).reshape(-1, coarse.dim)
    share = np.repeat(vol, k * k) / vertex_volume[v]
    g = g * share[:, None]

    order = np.argsort(v, kind="stable")
    v, c, g = v[order], c[order], g[order]
    indptr = np.searchsorted(v, np.arange(coarse.n_vertices + 1))
    return indptr, c, g


def build_phong(binding: BindingMap, fine: SimplicialMesh, coarse: SimplicialMesh,
                blend: Optional[float] = None) -> ProlongationOperator:
    blend = settings.phong_blend if blend is None else float(blend)
    if not 0.0 <= blend <= 1.0:
        raise ProlongationError(f"Phong blend must lie in [0, 1], got {blend}")
    bary = build_barycentric(binding, coarse)
    if blend == 0.0:
        return ProlongationOperator(weights=bary.weights.copy(), kind=ProlongationKind.PHONG,
                                    diagnostics=bary.diagnostics, extra={"blend": blend})

    indptr, table_c, table_g = _vertex_gradient_table(coarse)
    k = coarse.dim + 1
    fine_idx = np.repeat(np.arange(fine.n_vertices), k)
    corner = coarse.elements[binding.hosts].ravel()
    w = binding.coords.ravel()

    counts = indptr[corner + 1] - indptr[corner]
    offsets = np.repeat(indptr[corner] - np.cumsum(counts) + counts, counts) + np.arange(counts.sum())
    rows = np.repeat(fine_idx, counts)
    arm = np.repeat(fine.rest_positions[fine_idx] - coarse.rest_positions[corner], counts, axis=0)
    values = np.repeat(w, counts) * np.einsum("ij,ij->i", table_g[offsets], arm)
    gradient_part = sp.coo_matrix((values, (rows, table_c[offsets])), shape=bary.shape).tocsr()

    weights = (bary.weights + blend * gradient_part).tocsr()
    weights.eliminate_zeros()
    operator = ProlongationOperator(weights=weights, kind=ProlongationKind.PHONG, extra={"blend": blend})
    operator.diagnostics = norm_report(operator)
    return operator


def build_biharmonic(fine: SimplicialMesh, coarse: SimplicialMesh, reverse_binding: BindingMap) -> ProlongationOperator:
    if reverse_binding.n_vertices != coarse.n_vertices:
        raise ProlongationError("Reverse binding must bind every coarse vertex into the fine mesh")
    system = solve_biharmonic(biharmonic_system(fine, reverse_binding))
    operator = ProlongationOperator(
        weights=sp.csr_matrix(system.W),
        kind=ProlongationKind.BIHARMONIC,
        extra={
            "constraint_residual": system.constraint_residual(),
            "kernel_residual": system.kernel_residual,
            "support_fraction": support_fraction(sp.csr_matrix(system.W)),
        },
    )
    operator.diagnostics = norm_report(operator)
    return operator


def support_fraction(weights: sp.csr_matrix, threshold: float = 1e-6) -> float:
    """Mean fraction of columns per row with |w| > threshold."""
    significant = (abs(weights) > threshold).sum(axis=1)
    return float(np.asarray(significant).mean() / weights.shape[1])


def prolong(operator: ProlongationOperator, coarse_field: np.ndarray) -> np.ndarray:
    coarse_field = np.asarray(coarse_field, dtype=np.float64)
    if coarse_field.shape[0] != operator.n_coarse:
        raise ProlongationError(
            f"Field has {coarse_field.shape[0]} rows, operator expects {operator.n_coarse} coarse vertices"
        )
    return operator.weights @ coarse_field


class Projection:
    """Least-squares left inverse (P^T P)^-1 P^T with a cached factorization."""

    def __init__(self, operator: ProlongationOperator):
        self.operator = operator
        P = operator.weights
        column_norms = np.sqrt(np.asarray(P.multiply(P).sum(axis=0)).ravel())
        empty = np.nonzero(column_norms == 0.0)[0]
        if len(empty):
            rank = P.shape[1] - len(empty)
            raise ProlongationError(
                f"Operator has {len(empty)} empty column(s) (first: coarse vertex {empty[0]})",
                rank=rank, expected_rank=P.shape[1],
            )
        try:
            self._lu = splu((P.T @ P).tocsc())
        except RuntimeError as e:
            raise ProlongationError(f"P^T P is singular: {e}", expected_rank=P.shape[1])

    def __call__(self, fine_field: np.ndarray) -> np.ndarray:
        fine_field = np.asarray(fine_field, dtype=np.float64)
        if fine_field.shape[0] != self.operator.n_fine:
            raise ProlongationError(
                f"Field has {fine_field.shape[0]} rows, operator expects {self.operator.n_fine} fine vertices"
            )
        return self._lu.solve(np.asarray(self.operator.weights.T @ fine_field))


def projection(operator: ProlongationOperator) -> Projection:
    return Projection(operator)


def norm_report(operator: ProlongationOperator, power_iters: Optional[int] = None,
                epsilon: Optional[float] = None) -> NormDiagnostics:
    P = operator.weights
    power_iters = settings.power_iters if power_iters is None else power_iters
    frobenius = float(np.sqrt((P.data ** 2).sum()))

    vector = np.random.default_rng(0).standard_normal(P.shape[1])
    vector /= np.linalg.norm(vector)
    sigma = 0.0
    for _ in range(power_iters):
        image = P.T @ (P @ vector)
        norm = np.linalg.norm(image)
        if norm == 0.0:
            break
        sigma = np.sqrt(norm)
        vector = image / norm

    stored = P.data if P.nnz else np.zeros(1)
    has_negative = bool(stored.min() < 0.0)
    bound = float(np.sqrt(P.shape[0]))
    violated = None if has_negative else bool(frobenius > bound * (1.0 + 1e-12))
    if violated:
        logger.warning(f"{operator.kind.value} operator breaks the Frobenius bound: {frobenius:.6g} > {bound:.6g}")

    row_dev = float(np.abs(operator.row_sums() - 1.0).max()) if P.shape[0] else 0.0
    if row_dev > ROW_SUM_TOL:
        logger.warning(f"{operator.kind.value} operator row sums deviate from 1 by {row_dev:.3e}")
    return NormDiagnostics(
        frobenius_norm=frobenius,
        two_norm_estimate=float(sigma),
        min_entry=float(stored.min()),
        max_entry=float(stored.max()),
        row_sum_max_dev=row_dev,
        rows=int(P.shape[0]),
        has_negative=has_negative,
        frobenius_bound=bound,
        bound_violated=violated,
        epsilon=epsilon,
    )


def export_matrix_market(operator: ProlongationOperator, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), operator.weights, comment=f"kind={operator.kind.value}")
    return path.with_suffix(".mtx") if path.suffix != ".mtx" else path


def build_operator(fine: SimplicialMesh, coarse: SimplicialMesh, kind, blend: Optional[float] = None,
                   binding: Optional[BindingMap] = None) -> ProlongationOperator:
    kind = ProlongationKind.parse(kind)
    if kind == ProlongationKind.BIHARMONIC:
        return build_biharmonic(fine, coarse, bind_reverse(coarse, fine))
    binding = binding or bind_robust(fine, coarse)
    if kind == ProlongationKind.PHONG:
        return build_phong(binding, fine, coarse, blend)
    return build_barycentric(binding, coarse)


def build_operators(hierarchy: Hierarchy, kind, blend: Optional[float] = None) -> List[ProlongationOperator]:
    """
    Operator for every adjacent level pair (l, l+1), coarsest pair first.

    `kind` is one kind for every pair or a sequence with one kind per pair.
    """
    if isinstance(kind, (list, tuple)):
        kinds = [ProlongationKind.parse(k) for k in kind]
        if len(kinds) < hierarchy.finest:
            raise ProlongationError(f"{len(kinds)} prolongation kind(s) for {hierarchy.finest} level pair(s)")
    else:
        kinds = [ProlongationKind.parse(kind)] * hierarchy.finest
    operators = []
    for level in range(hierarchy.finest):
        coarse, fine = hierarchy[level], hierarchy[level + 1]
        operator = build_operator(fine, coarse, kinds[level], blend)
        if hierarchy.stats:
            operator.diagnostics.epsilon = hierarchy.stats[level].epsilon
        logger.info(
            f"Built {operator.kind.value} operator {level}->{level + 1}: shape {operator.shape}, "
            f"nnz {operator.weights.nnz}, frobenius {operator.diagnostics.frobenius_norm:.4g}"
        )
        operators.append(operator)
    return operators
