"""
Scene Models - validated YAML scene description
"""

from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import settings
from models.errors import ConfigError
from models.materials import MaterialModelKind
from models.prolongation import ProlongationKind


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeneratedHierarchy(_Strict):
    shape: str
    params: Dict[str, object] = Field(default_factory=dict)
    per_level: Optional[List[Dict[str, object]]] = None
    refine_levels: int = 0
    jitter: float = 0.0
    seed: int = 0


class HierarchySource(_Strict):
    manifest: Optional[str] = None
    generate: Optional[GeneratedHierarchy] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.manifest is None) == (self.generate is None):
            raise ValueError("hierarchy needs exactly one of 'manifest' or 'generate'")
        return self


class TimeConfig(_Strict):
    h: float = Field(gt=0)
    steps: int = Field(ge=0)


class MaterialConfig(_Strict):
    model: MaterialModelKind = MaterialModelKind.NEOHOOKEAN
    young: float = Field(gt=0)
    poisson: float = Field(default_factory=lambda: settings.default_poisson, gt=-1.0, lt=0.5)
    density: float = Field(gt=0)


class Box(_Strict):
    lower: List[float]
    upper: List[float]

    @model_validator(mode="before")
    @classmethod
    def _from_pair(cls, value):
        if isinstance(value, (list, tuple)) and len(value) == 2:
            return {"lower": value[0], "upper": value[1]}
        return value


class AssignmentRule(_Strict):
    material: str
    box: Box


class HalfPlaneConfig(_Strict):
    type: Literal["half_plane"]
    normal: List[float]
    offset: float = 0.0
    friction: Optional[float] = Field(default=None, ge=0)


class StaticMeshConfig(_Strict):
    type: Literal["static_mesh"]
    path: Optional[str] = None
    vertices: Optional[List[List[float]]] = None
    facets: Optional[List[List[int]]] = None
    translate: Optional[List[float]] = None
    scale: float = 1.0
    friction: Optional[float] = Field(default=None, ge=0)
    open: bool = False

    @model_validator(mode="after")
    def _geometry(self):
        inline = self.vertices is not None and self.facets is not None
        if (self.path is None) == (not inline):
            raise ValueError("static_mesh needs either 'path' or both 'vertices' and 'facets'")
        return self


Collider = Annotated[Union[HalfPlaneConfig, StaticMeshConfig], Field(discriminator="type")]


class DirichletConfig(_Strict):
    box: Box
    velocity: Optional[List[float]] = None
    angular_velocity: Optional[Union[float, List[float]]] = None
    release_step: Optional[int] = Field(default=None, ge=0)


class InitialConfig(_Strict):
    translate: Optional[List[float]] = None
    velocity: Optional[List[float]] = None
    angular_velocity: Optional[Union[float, List[float]]] = None


class BarrierConfig(_Strict):
    dhat: float = Field(default=1e-3, gt=0)
    kappa: float = Field(default=1e4, gt=0)
    self_contact: bool = False


class FrictionConfig(_Strict):
    mu: float = Field(default=0.0, ge=0)
    eps_v: float = Field(default=1e-3, gt=0)


class ProgressiveSection(_Strict):
    w: float = Field(default=0.0, ge=0)
    kind: ProlongationKind = ProlongationKind.BARYCENTRIC
    phong_blend: float = Field(default_factory=lambda: settings.phong_blend, ge=0, le=1)
    # one kind per level pair, coarsest first; overrides `kind`
    pair_kinds: Optional[List[ProlongationKind]] = None

    @field_validator("kind", mode="before")
    @classmethod
    def _kind(cls, value):
        return ProlongationKind.parse(value)

    @field_validator("pair_kinds", mode="before")
    @classmethod
    def _pair_kinds(cls, value):
        if value is None:
            return None
        return [ProlongationKind.parse(v) for v in value]


class SolverSection(_Strict):
    newton_tol: float = Field(default_factory=lambda: settings.newton_tol, gt=0)
    max_iters: int = Field(default_factory=lambda: settings.max_iters, ge=1)
    shrink: float = Field(default_factory=lambda: settings.line_search_shrink, gt=0, lt=1)
    armijo: float = Field(default_factory=lambda: settings.armijo, ge=0, lt=1)
    project_psd: bool = True
    max_line_search: int = Field(default_factory=lambda: settings.max_line_search, ge=1)


class SceneConfig(_Strict):
    name: str = "scene"
    seed: int = 0
    hierarchy: HierarchySource
    time: TimeConfig
    gravity: List[float]
    materials: Dict[str, MaterialConfig]
    assignment: List[AssignmentRule] = Field(default_factory=list)
    colliders: List[Collider] = Field(default_factory=list)
    dirichlet: List[DirichletConfig] = Field(default_factory=list)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    barrier: BarrierConfig = Field(default_factory=BarrierConfig)
    friction: FrictionConfig = Field(default_factory=FrictionConfig)
    progressive: ProgressiveSection = Field(default_factory=ProgressiveSection)
    solver: SolverSection = Field(default_factory=SolverSection)

    # Set by load_scene; relative paths resolve against it
    base_dir: Optional[str] = None

    @model_validator(mode="after")
    def _consistent(self):
        if not self.materials:
            raise ValueError("at least one material is required")
        dim = len(self.gravity)
        if dim not in (2, 3):
            raise ValueError(f"gravity must have 2 or 3 components, got {dim}")
        for rule in self.assignment:
            if rule.material not in self.materials:
                raise ValueError(f"assignment refers to unknown material '{rule.material}'")
        for collider in self.colliders:
            if isinstance(collider, HalfPlaneConfig) and len(collider.normal) != dim:
                raise ValueError("half_plane normal does not match the scene dimension")
        for region in self.dirichlet:
            if region.velocity is not None and len(region.velocity) != dim:
                raise ValueError("dirichlet velocity does not match the scene dimension")
        return self

    @property
    def dim(self) -> int:
        return len(self.gravity)

    def resolve(self, path: str) -> Path:
        candidate = Path(path)
        if not candidate.is_absolute() and self.base_dir:
            candidate = Path(self.base_dir) / candidate
        return candidate

    def material_names(self) -> List[str]:
        return list(self.materials)


def load_scene(path) -> SceneConfig:
    """Parse and validate a scene file; every failure becomes a ConfigError."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Scene file not found: {path}")
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Scene file {path} is not valid YAML: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Scene file {path} must contain a mapping")
    data.setdefault("base_dir", str(path.parent.resolve()))
    scene = scene_from_dict(data)
    if scene.hierarchy.manifest and not scene.resolve(scene.hierarchy.manifest).exists():
        raise ConfigError(f"Hierarchy manifest not found: {scene.hierarchy.manifest}")
    for collider in scene.colliders:
        if isinstance(collider, StaticMeshConfig) and collider.path and not scene.resolve(collider.path).exists():
            raise ConfigError(f"Static mesh not found: {collider.path}")
    return scene


def scene_from_dict(data: dict) -> SceneConfig:
    try:
        return SceneConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid scene: {e}")
