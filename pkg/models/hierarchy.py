"""
Hierarchy Models - ordered meshes of one domain, coarsest first
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from models.errors import HierarchyError
from models.mesh import SimplicialMesh


@dataclass
class LevelStats:
    level: int
    label: str
    vertices: int
    elements: int
    volume: float
    bbox_min: List[float]
    bbox_max: List[float]
    reoriented: int = 0
    epsilon: Optional[float] = None  # max coarse-boundary to next-fine-boundary distance

    def to_dict(self):
        return {
            "level": self.level,
            "label": self.label,
            "vertices": self.vertices,
            "elements": self.elements,
            "volume": self.volume,
            "bbox_min": self.bbox_min,
            "bbox_max": self.bbox_max,
            "reoriented": self.reoriented,
            "epsilon": self.epsilon,
        }


@dataclass(eq=False)
class Hierarchy:
    levels: List[SimplicialMesh]
    labels: List[str] = field(default_factory=list)
    stats: List[LevelStats] = field(default_factory=list)

    def __post_init__(self):
        if not self.levels:
            raise HierarchyError("Hierarchy needs at least one level")
        if not self.labels:
            self.labels = [f"level_{i}" for i in range(len(self.levels))]
        if len(self.labels) != len(self.levels):
            raise HierarchyError("One label per level is required")

    @property
    def dim(self) -> int:
        return self.levels[0].dim

    @property
    def finest(self) -> int:
        """Index L of the finest level."""
        return len(self.levels) - 1

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, level: int) -> SimplicialMesh:
        return self.levels[level]

    def counts(self) -> List[int]:
        return [mesh.n_vertices for mesh in self.levels]

    def to_dict(self) -> Dict:
        return {"dim": self.dim, "levels": [s.to_dict() for s in self.stats] or [m.to_dict() for m in self.levels]}
