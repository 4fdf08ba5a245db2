"""
Assembly - scatter local gradients and Hessians into global vectors and sparse matrices
"""

import numpy as np
import scipy.sparse as sp


def project_psd(local: np.ndarray) -> np.ndarray:
    """Clamp negative eigenvalues of each symmetric block at zero."""
    if not len(local):
        return local
    sym = 0.5 * (local + np.swapaxes(local, 1, 2))
    values, vectors = np.linalg.eigh(sym)
    values = np.clip(values, 0.0, None)
    return np.einsum("pij,pj,pkj->pik", vectors, values, vectors)


def local_dofs(nodes: np.ndarray, dim: int) -> np.ndarray:
    """Global dof indices (P, n_local * dim) for stacks of node indices (P, n_local)."""
    return (nodes[:, :, None] * dim + np.arange(dim)).reshape(len(nodes), -1)


def scatter_gradient(nodes: np.ndarray, local: np.ndarray, n_dofs: int) -> np.ndarray:
    """Sum local gradients (P, n_local * dim) into a flat vector; out-of-range dofs are dropped."""
    dim = local.shape[1] // nodes.shape[1] if nodes.size else 1
    dofs = local_dofs(nodes, dim).ravel()
    values = local.ravel()
    keep = dofs < n_dofs
    return np.bincount(dofs[keep], weights=values[keep], minlength=n_dofs)


def scatter_hessian(nodes: np.ndarray, local: np.ndarray, n_dofs: int) -> sp.csr_matrix:
    """Sum local Hessians (P, k, k) into an (n_dofs, n_dofs) CSR matrix; out-of-range dofs are dropped."""
    if not nodes.size:
        return sp.csr_matrix((n_dofs, n_dofs))
    dim = local.shape[1] // nodes.shape[1]
    dofs = local_dofs(nodes, dim)
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    values = local.ravel()
    keep = (rows < n_dofs) & (cols < n_dofs)
    matrix = sp.coo_matrix((values[keep], (rows[keep], cols[keep])), shape=(n_dofs, n_dofs)).tocsr()
    matrix.sum_duplicates()
    return matrix
