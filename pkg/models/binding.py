"""
Binding Models - host element and barycentric weights per fine vertex
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List

import numpy as np

from models.errors import BindingError

UNASSIGNED = -1
WEIGHT_SUM_TOL = 1e-12
INSIDE_TOL = 1e-12


class BindingStatus(IntEnum):
    UNASSIGNED = 0
    INSIDE = 1
    EXTRAPOLATED = 2


@dataclass(eq=False)
class BindingMap:
    hosts: np.ndarray    # (n,) coarse element per fine vertex, -1 while unassigned
    coords: np.ndarray   # (n, d + 1) barycentric weights in the host, NaN while unassigned
    status: np.ndarray   # (n,) BindingStatus values
    n_host_elements: int

    @classmethod
    def empty(cls, n_vertices: int, dim: int, n_host_elements: int) -> "BindingMap":
        return cls(
            hosts=np.full(n_vertices, UNASSIGNED, dtype=np.int64),
            coords=np.full((n_vertices, dim + 1), np.nan),
            status=np.full(n_vertices, BindingStatus.UNASSIGNED, dtype=np.int8),
            n_host_elements=n_host_elements,
        )

    def copy(self) -> "BindingMap":
        return BindingMap(self.hosts.copy(), self.coords.copy(), self.status.copy(), self.n_host_elements)

    @property
    def n_vertices(self) -> int:
        return len(self.hosts)

    @property
    def unassigned(self) -> np.ndarray:
        return np.nonzero(self.hosts == UNASSIGNED)[0]

    @property
    def is_complete(self) -> bool:
        return not len(self.unassigned)

    @property
    def n_extrapolated(self) -> int:
        return int(np.count_nonzero(self.status == BindingStatus.EXTRAPOLATED))

    def assign(self, vertex: int, host: int, weights: np.ndarray, status: BindingStatus):
        self.hosts[vertex] = host
        self.coords[vertex] = weights
        self.status[vertex] = status

    def validate(self):
        """Raise BindingError when the map is incomplete or breaks a weight invariant."""
        if not self.is_complete:
            raise BindingError(f"{len(self.unassigned)} vertices are unbound", vertex=int(self.unassigned[0]))
        if self.hosts.min() < 0 or self.hosts.max() >= self.n_host_elements:
            raise BindingError("Host element index out of range")
        sums = self.coords.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > WEIGHT_SUM_TOL)[0]
        if len(bad):
            raise BindingError(f"Weights of vertex {bad[0]} sum to {sums[bad[0]]!r}", vertex=int(bad[0]))
        inside = self.status == BindingStatus.INSIDE
        bad = np.nonzero(inside & (self.coords.min(axis=1) < -INSIDE_TOL))[0]
        if len(bad):
            raise BindingError(f"Inside vertex {bad[0]} has a negative weight", vertex=int(bad[0]))

    def summary(self) -> Dict:
        assigned = self.hosts != UNASSIGNED
        coords = self.coords[assigned]
        return {
            "vertices": self.n_vertices,
            "inside": int(np.count_nonzero(self.status == BindingStatus.INSIDE)),
            "extrapolated": self.n_extrapolated,
            "unassigned": int(len(self.unassigned)),
            "min_weight": float(coords.min()) if coords.size else None,
            "max_weight": float(coords.max()) if coords.size else None,
        }

    to_dict = summary


@dataclass
class BindingAudit:
    """Element-graph distance from each host to the hosts of its containment-bound neighbors."""
    distances: np.ndarray  # (n,) hops, -1 when no neighbor is bound Inside
    threshold: int
    flagged: List[int] = field(default_factory=list)

    @property
    def n_flagged(self) -> int:
        return len(self.flagged)

    def to_dict(self):
        measured = self.distances[self.distances >= 0]
        return {
            "threshold": self.threshold,
            "flagged": self.n_flagged,
            "flagged_vertices": self.flagged[:50],
            "max_distance": int(measured.max()) if measured.size else 0,
        }
