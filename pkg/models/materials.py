"""
Material Models - elastic parameters and per-element rest data
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from models.errors import MaterialError


class MaterialModelKind(str, Enum):
    NEOHOOKEAN = "neohookean"
    STVK = "stvk"
    COROTATIONAL = "corotational"


def lame_from_young_poisson(young: float, poisson: float):
    """(mu, lambda) from Young's modulus and Poisson ratio."""
    if young <= 0:
        raise MaterialError(f"Young's modulus must be positive, got {young}")
    if not -1.0 < poisson < 0.5:
        raise MaterialError(f"Poisson ratio must lie in (-1, 0.5), got {poisson}")
    mu = young / (2.0 * (1.0 + poisson))
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    return mu, lam


@dataclass(frozen=True)
class MaterialParams:
    model: MaterialModelKind
    young: float     # Pa
    poisson: float
    density: float   # kg / m^d

    def __post_init__(self):
        object.__setattr__(self, "model", MaterialModelKind(self.model))
        lame_from_young_poisson(self.young, self.poisson)
        if self.density <= 0:
            raise MaterialError(f"Density must be positive, got {self.density}")

    @property
    def lame(self):
        return lame_from_young_poisson(self.young, self.poisson)

    def to_dict(self):
        return {"model": self.model.value, "young": self.young, "poisson": self.poisson, "density": self.density}


@dataclass(eq=False)
class ElementRestData:
    dm_inv: np.ndarray       # (m, d, d)
    volume: np.ndarray       # (m,) rest volume, > 0
    material_id: np.ndarray  # (m,) index into the material table
    grads: np.ndarray        # (m, d+1, d) basis function gradients

    def __post_init__(self):
        if np.any(self.volume <= 0):
            raise MaterialError("Element rest volume must be positive")
