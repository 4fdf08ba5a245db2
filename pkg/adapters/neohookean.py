"""Stable Neo-Hookean elasticity with a log barrier on det F"""
import numpy as np

from adapters.base import ElasticModel


class NeoHookean(ElasticModel):
    """psi = mu/2 (tr(F^T F) - d) - mu log J + lam/2 log^2 J, +inf for J <= 0."""

    name = "neohookean"

    def energy_density(self, F, mu, lam):
        d = F.shape[-1]
        J = np.linalg.det(F)
        valid = J > 0
        logJ = np.log(np.where(valid, J, 1.0))
        psi = 0.5 * mu * (np.einsum("mij,mij->m", F, F) - d) - mu * logJ + 0.5 * lam * logJ ** 2
        return np.where(valid, psi, np.inf)

    def first_piola(self, F, mu, lam):
        J = np.linalg.det(F)
        logJ = np.log(np.where(J > 0, J, 1.0))
        F_inv_T = np.swapaxes(np.linalg.inv(F), 1, 2)
        return mu[:, None, None] * (F - F_inv_T) + (lam * logJ)[:, None, None] * F_inv_T

    def piola_derivative(self, F, mu, lam):
        d = F.shape[-1]
        J = np.linalg.det(F)
        logJ = np.log(np.where(J > 0, J, 1.0))
        F_inv = np.linalg.inv(F)
        eye = np.eye(d)
        identity = np.einsum("ik,jl->ijkl", eye, eye)
        # d(F^-T)_ij / dF_kl = -Finv_jk Finv_li
        twist = np.einsum("mjk,mli->mijkl", F_inv, F_inv)
        outer = np.einsum("mji,mlk->mijkl", F_inv, F_inv)
        return (
            mu[:, None, None, None, None] * identity
            + (mu - lam * logJ)[:, None, None, None, None] * twist
            + lam[:, None, None, None, None] * outer
        )
