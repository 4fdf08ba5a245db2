"""Corotational linear elasticity"""
import numpy as np

from adapters.base import ElasticModel


def polar_rotation(F: np.ndarray):
    """
    Rotation part of F from its SVD with the reflection moved into the last
    singular value, so det R = +1. Returns (R, U, sigma, V).
    """
    U, sigma, Vt = np.linalg.svd(F)
    V = np.swapaxes(Vt, 1, 2).copy()
    U = U.copy()
    sigma = sigma.copy()
    flip_u = np.linalg.det(U) < 0
    U[flip_u, :, -1] *= -1.0
    sigma[flip_u, -1] *= -1.0
    flip_v = np.linalg.det(V) < 0
    V[flip_v, :, -1] *= -1.0
    sigma[flip_v, -1] *= -1.0
    R = U @ np.swapaxes(V, 1, 2)
    return R, U, sigma, V


class Corotational(ElasticModel):
    """psi = mu ||F - R||^2 + lam/2 tr(R^T F - I)^2."""

    name = "corotational"

    def energy_density(self, F, mu, lam):
        d = F.shape[-1]
        R, _, _, _ = polar_rotation(F)
        diff = F - R
        stretch = np.einsum("mij,mij->m", R, F) - d
        return mu * np.einsum("mij,mij->m", diff, diff) + 0.5 * lam * stretch ** 2

    def first_piola(self, F, mu, lam):
        d = F.shape[-1]
        R, _, _, _ = polar_rotation(F)
        stretch = np.einsum("mij,mij->m", R, F) - d
        return 2.0 * mu[:, None, None] * (F - R) + (lam * stretch)[:, None, None] * R

    def piola_derivative(self, F, mu, lam):
        d = F.shape[-1]
        R, U, sigma, V = polar_rotation(F)
        stretch = np.einsum("mij,mij->m", R, F) - d

        # dR for every unit perturbation E_kl: U Omega V^T with
        # Omega_ij = (M_ij - M_ji) / (s_i + s_j), M = U^T E_kl V
        M = np.einsum("mki,mlj->mklij", U, V)
        denom = sigma[:, :, None] + sigma[:, None, :]
        safe = np.where(np.abs(denom) > 1e-12, denom, np.inf)
        omega = (M - np.swapaxes(M, 3, 4)) / safe[:, None, None, :, :]
        dR = np.einsum("mai,mklij,mbj->mabkl", U, omega, V)

        eye = np.eye(d)
        identity = np.einsum("ak,bl->abkl", eye, eye)
        return (
            2.0 * mu[:, None, None, None, None] * (identity[None] - dR)
            + lam[:, None, None, None, None] * np.einsum("mab,mkl->mabkl", R, R)
            + (lam * stretch)[:, None, None, None, None] * dR
        )
