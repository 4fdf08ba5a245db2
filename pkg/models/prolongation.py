"""
Prolongation Models - sparse coarse-to-fine operators and their diagnostics
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp


class ProlongationKind(str, Enum):
    BARYCENTRIC = "barycentric"
    BIHARMONIC = "biharmonic"
    PHONG = "phong"

    @classmethod
    def parse(cls, value) -> "ProlongationKind":
        if isinstance(value, cls):
            return value
        aliases = {"bary": cls.BARYCENTRIC}
        key = str(value).lower()
        return aliases.get(key) or cls(key)


@dataclass
class NormDiagnostics:
    frobenius_norm: float
    two_norm_estimate: float
    min_entry: float
    max_entry: float
    row_sum_max_dev: float
    rows: int
    has_negative: bool
    frobenius_bound: float           # sqrt(rows)
    bound_violated: Optional[bool]   # only judged for nonnegative operators
    epsilon: Optional[float] = None  # hierarchy boundary distance, reported alongside

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class ProlongationOperator:
    """Scalar weights applied identically to every coordinate: fine = P @ coarse."""
    weights: sp.csr_matrix
    kind: ProlongationKind
    diagnostics: Optional[NormDiagnostics] = None
    extra: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.weights = sp.csr_matrix(self.weights)
        self.weights.sum_duplicates()
        self.weights.sort_indices()

    @property
    def shape(self):
        return self.weights.shape

    @property
    def n_fine(self) -> int:
        return self.weights.shape[0]

    @property
    def n_coarse(self) -> int:
        return self.weights.shape[1]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "shape": list(self.shape),
            "nnz": int(self.weights.nnz),
            "diagnostics": self.diagnostics.to_dict() if self.diagnostics else None,
        }


@dataclass(eq=False)
class BiharmonicSystem:
    """Squared-Laplacian energy A, interpolation constraints B V_fine = V_coarse, solution W."""
    A: sp.csr_matrix
    B: sp.csr_matrix
    W: Optional[np.ndarray] = None
    kernel_residual: Optional[float] = None  # ||A X_fine|| / ||A|| for the rest coordinates

    def constraint_residual(self) -> float:
        if self.W is None:
            return float("inf")
        return float(np.abs(self.B @ self.W - np.eye(self.B.shape[0])).max())
