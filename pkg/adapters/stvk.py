"""St. Venant-Kirchhoff elasticity"""
import numpy as np

from adapters.base import ElasticModel


class StVK(ElasticModel):
    """psi = mu ||E||^2 + lam/2 tr(E)^2 with E = (F^T F - I) / 2."""

    name = "stvk"

    @staticmethod
    def _green(F):
        d = F.shape[-1]
        return 0.5 * (np.einsum("mki,mkj->mij", F, F) - np.eye(d))

    def energy_density(self, F, mu, lam):
        E = self._green(F)
        trace = np.trace(E, axis1=1, axis2=2)
        return mu * np.einsum("mij,mij->m", E, E) + 0.5 * lam * trace ** 2

    def _second_piola(self, F, mu, lam):
        d = F.shape[-1]
        E = self._green(F)
        trace = np.trace(E, axis1=1, axis2=2)
        return 2.0 * mu[:, None, None] * E + (lam * trace)[:, None, None] * np.eye(d)

    def first_piola(self, F, mu, lam):
        return F @ self._second_piola(F, mu, lam)

    def piola_derivative(self, F, mu, lam):
        d = F.shape[-1]
        eye = np.eye(d)
        S = self._second_piola(F, mu, lam)
        FFt = F @ np.swapaxes(F, 1, 2)
        m4 = mu[:, None, None, None, None]
        return (
            np.einsum("ik,mlj->mijkl", eye, S)
            + m4 * np.einsum("mil,mkj->mijkl", F, F)
            + m4 * np.einsum("mik,jl->mijkl", FFt, eye)
            + lam[:, None, None, None, None] * np.einsum("mij,mkl->mijkl", F, F)
        )
