"""
Biharmonic - modified biharmonic coordinates through an equality-constrained QP

    minimize  trace(1/2 W^T A W)   subject to  B W = I

A is the mass-normalized squared FEM Laplacian of the fine mesh and B holds the
barycentric weights of every coarse vertex inside its fine host element. The sparse
path factorizes the KKT matrix [A B^T; B 0]; two dense oracles (direct KKT and the
null-space formula W = B+ - N (N^T A N)^-1 N^T A B+) are kept beside it.
"""

import logging

import igl
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from models.binding import BindingMap
from models.errors import ProlongationError
from models.mesh import SimplicialMesh
from models.prolongation import BiharmonicSystem
from pipeline.mesh_ops import igl_arrays

logger = logging.getLogger(__name__)

DROP_TOL = 1e-13


def stiffness_matrix(mesh: SimplicialMesh) -> sp.csr_matrix:
    """Linear FEM Laplacian with natural boundary conditions (positive semidefinite)."""
    V, T = igl_arrays(mesh)
    L = -sp.csr_matrix(igl.cotmatrix(V, T))
    L.sum_duplicates()
    return L


def squared_laplacian(mesh: SimplicialMesh) -> sp.csr_matrix:
    L = stiffness_matrix(mesh)
    V, T = igl_arrays(mesh)
    mass = igl.massmatrix(V, T, igl.MASSMATRIX_TYPE_BARYCENTRIC).diagonal()
    return (L.T @ sp.diags(1.0 / mass) @ L).tocsr()


def interpolation_matrix(reverse_binding: BindingMap, fine: SimplicialMesh) -> sp.csr_matrix:
    """Row j carries the weights of coarse vertex j in its fine host element."""
    reverse_binding.validate()
    n_coarse = reverse_binding.n_vertices
    cols = fine.elements[reverse_binding.hosts]
    rows = np.repeat(np.arange(n_coarse), fine.dim + 1)
    B = sp.coo_matrix((reverse_binding.coords.ravel(), (rows, cols.ravel())), shape=(n_coarse, fine.n_vertices))
    return B.tocsr()


def _rank_report(B: sp.spmatrix) -> int:
    return int(np.linalg.matrix_rank(B.toarray()))


def solve_kkt(A: sp.spmatrix, B: sp.spmatrix) -> np.ndarray:
    """Sparse LU of the symmetric indefinite KKT matrix; returns W (n_fine, n_coarse)."""
    n_fine, n_coarse = A.shape[0], B.shape[0]
    K = sp.bmat([[A, B.T], [B, None]], format="csc")
    rhs = np.zeros((n_fine + n_coarse, n_coarse))
    rhs[n_fine:] = np.eye(n_coarse)
    try:
        solution = splu(K).solve(rhs)
    except RuntimeError as e:
        rank = _rank_report(B)
        raise ProlongationError(
            f"KKT factorization failed ({e}); rank(B) = {rank} of {n_coarse}", rank=rank, expected_rank=n_coarse
        )
    if not np.all(np.isfinite(solution)):
        rank = _rank_report(B)
        raise ProlongationError(f"KKT solve produced non-finite values; rank(B) = {rank}", rank=rank,
                                expected_rank=n_coarse)
    return solution[:n_fine]


def dense_kkt_oracle(A, B) -> np.ndarray:
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    B = B.toarray() if sp.issparse(B) else np.asarray(B)
    n_fine, n_coarse = A.shape[0], B.shape[0]
    K = np.block([[A, B.T], [B, np.zeros((n_coarse, n_coarse))]])
    rhs = np.vstack([np.zeros((n_fine, n_coarse)), np.eye(n_coarse)])
    return np.linalg.solve(K, rhs)[:n_fine]


def nullspace_oracle(A, B) -> np.ndarray:
    """W = B+ - N (N^T A N)^-1 N^T A B+ with N spanning null(B)."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    B = B.toarray() if sp.issparse(B) else np.asarray(B)
    B_pinv = np.linalg.pinv(B)
    N = scipy.linalg.null_space(B)
    if not N.size:
        return B_pinv
    reduced = N.T @ A @ N
    return B_pinv - N @ np.linalg.solve(reduced, N.T @ A @ B_pinv)


def biharmonic_system(fine: SimplicialMesh, reverse_binding: BindingMap) -> BiharmonicSystem:
    A = squared_laplacian(fine)
    B = interpolation_matrix(reverse_binding, fine)
    kernel = float(np.linalg.norm(A @ fine.rest_positions))
    return BiharmonicSystem(A=A, B=B, kernel_residual=kernel)


def solve_biharmonic(system: BiharmonicSystem) -> BiharmonicSystem:
    W = solve_kkt(system.A, system.B)
    W[np.abs(W) < DROP_TOL] = 0.0
    system.W = W
    residual = system.constraint_residual()
    if residual > 1e-8:
        logger.warning(f"Biharmonic constraint residual {residual:.3e} exceeds 1e-8")
    if system.kernel_residual is not None and system.kernel_residual > 1e-9:
        logger.info(
            f"Rest coordinates are not in ker(A) (||A X|| = {system.kernel_residual:.3e}); "
            "affine reproduction is not guaranteed"
        )
    return system
