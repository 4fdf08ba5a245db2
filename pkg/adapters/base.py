"""Elastic Model Base Interface"""
from abc import ABC, abstractmethod

import numpy as np


class ElasticModel(ABC):
    """
    Base interface for hyperelastic energy densities.

    All methods are vectorized over elements: F has shape (m, d, d) and mu, lam
    have shape (m,).
    """

    name = "base"

    @abstractmethod
    def energy_density(self, F: np.ndarray, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """psi(F) per element, shape (m,). +inf where the model is undefined."""
        pass

    @abstractmethod
    def first_piola(self, F: np.ndarray, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """dpsi/dF per element, shape (m, d, d)."""
        pass

    @abstractmethod
    def piola_derivative(self, F: np.ndarray, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """d^2 psi / dF_ij dF_kl per element, shape (m, d, d, d, d)."""
        pass

    def __repr__(self):
        return f"{type(self).__name__}()"
