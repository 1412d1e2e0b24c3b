"""Pydantic schemas for run configuration, value objects and file formats."""
import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


# ============= Viewing configuration =============

class Camera(BaseModel):
    """Pinhole camera at the origin looking down -z."""
    fov_deg: float = Field(default=60.0, gt=10.0, lt=120.0, description="Vertical field of view")
    near: float = Field(default=0.05, gt=0.0, description="Near plane distance (m)")
    far: float = Field(default=5.0, gt=0.0, description="Far plane distance (m)")
    resolution: Tuple[int, int] = Field(default=(256, 256), description="(height, width) in pixels")

    class Config:
        extra = "forbid"
        frozen = True

    @field_validator("resolution")
    @classmethod
    def positive_resolution(cls, v):
        if v[0] < 1 or v[1] < 1:
            raise ValueError("resolution must be positive")
        return v

    @model_validator(mode="after")
    def near_before_far(self):
        if not self.near < self.far:
            raise ValueError("near must be smaller than far")
        return self

    @property
    def height(self) -> int:
        return self.resolution[0]

    @property
    def width(self) -> int:
        return self.resolution[1]

    @property
    def aspect(self) -> float:
        return self.width / self.height

    @property
    def tan_half_fov(self) -> float:
        return math.tan(math.radians(self.fov_deg) / 2.0)

    def at_resolution(self, resolution: Tuple[int, int]) -> "Camera":
        return self.model_copy(update={"resolution": tuple(resolution)})


class Light(BaseModel):
    """Directional light used only when compositing shadow-wall exports."""
    direction: Tuple[float, float, float] = (0.0, 0.0, -1.0)
    wall_brightness: float = Field(default=0.92, ge=0.0, le=1.0)
    shadow_brightness: float = Field(default=0.12, ge=0.0, le=1.0)

    class Config:
        extra = "forbid"
        frozen = True


class ViewingConfig(BaseModel):
    """Camera plus the optional light."""
    camera: Camera = Field(default_factory=Camera)
    light: Optional[Light] = None

    class Config:
        extra = "forbid"
        frozen = True


class RenderSettings(BaseModel):
    """Soft rasterizer settings."""
    sigma: float = Field(default=1e-4, gt=0.0, description="Edge softness in NDC² units")
    background: float = Field(default=0.0, ge=0.0, le=1.0)
    image_loss: Literal["l2", "mse"] = Field(default="l2", description="Root-of-sum or mean-squared image term")
    anneal: bool = Field(default=True, description="Anneal sigma from sigma_start down to sigma")
    sigma_start: float = Field(default=1e-3, gt=0.0)
    anneal_fraction: float = Field(default=0.4, ge=0.0, le=1.0)

    class Config:
        extra = "forbid"
        frozen = True


# ============= Objective and optimizer =============

class LossWeights(BaseModel):
    """Weights of the objective terms."""
    w_image: float = Field(default=1.0, ge=0.0)
    w_pen: float = Field(default=10.0, ge=0.0)
    w_limit: float = Field(default=0.0, ge=0.0)

    class Config:
        extra = "forbid"
        frozen = True

    @field_validator("w_image", "w_pen", "w_limit")
    @classmethod
    def finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("weight must be finite")
        return v


class LossReport(BaseModel):
    """Decomposition of one objective evaluation."""
    iteration: int = 0
    total: float
    image_term: float
    pen_term: float
    limit_term: float = 0.0

    class Config:
        frozen = True


class LearningRates(BaseModel):
    theta: float = Field(default=0.01, gt=0.0)
    q: float = Field(default=0.005, gt=0.0)
    t: float = Field(default=0.002, gt=0.0)

    class Config:
        extra = "forbid"
        frozen = True


class OptimConfig(BaseModel):
    """Adam loop settings."""
    iterations: int = Field(default=5000, ge=1)
    rates: LearningRates = Field(default_factory=LearningRates)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    restarts: int = Field(default=3, ge=1)
    tolerance: float = Field(default=1e-3, ge=0.0, description="Stop when the mean squared pixel error drops below")
    plateau_window: int = Field(default=200, ge=1)
    plateau_tolerance: float = Field(default=1e-6, ge=0.0)
    snapshot_every: Optional[int] = Field(default=None, ge=1, description="Defaults to settings.snapshot_every")

    class Config:
        extra = "forbid"
        frozen = True

    @field_validator("betas")
    @classmethod
    def betas_in_range(cls, v):
        if not all(0.0 <= b < 1.0 for b in v):
            raise ValueError("betas must lie in [0, 1)")
        return v


class InterpolationConfig(BaseModel):
    frames: int = Field(default=30, ge=1, description="T; the sequence has T + 1 frames")
    refine: bool = False
    refine_iterations: int = Field(default=100, ge=0, le=100)

    class Config:
        extra = "forbid"
        frozen = True


class RigPaths(BaseModel):
    left: Optional[str] = None
    right: Optional[str] = None

    class Config:
        extra = "forbid"
        frozen = True


class RunConfig(BaseModel):
    """Top-level configuration file of every command."""
    targets: List[str] = Field(default_factory=list, description="Image paths or bundled:<name>")
    hands: Literal[1, 2] = 2
    camera: Camera = Field(default_factory=Camera)
    light: Optional[Light] = None
    render: RenderSettings = Field(default_factory=RenderSettings)
    optim: OptimConfig = Field(default_factory=OptimConfig)
    weights: LossWeights = Field(default_factory=LossWeights)
    interpolation: InterpolationConfig = Field(default_factory=InterpolationConfig)
    rigs: RigPaths = Field(default_factory=RigPaths)
    output_dir: Optional[str] = None
    seed: Optional[int] = Field(default=None, ge=0, lt=2 ** 64, description="Overrides optim.seed")

    class Config:
        extra = "forbid"
        frozen = True

    @property
    def effective_optim(self) -> OptimConfig:
        if self.seed is None:
            return self.optim
        return self.optim.model_copy(update={"seed": self.seed})

    @property
    def viewing(self) -> ViewingConfig:
        return ViewingConfig(camera=self.camera, light=self.light)


# ============= File formats =============

class HandParamsFile(BaseModel):
    """One hand in a params file: angles in degrees, Q as a 3x3 matrix."""
    beta: List[float] = Field(min_length=6, max_length=6)
    theta_deg: List[List[float]] = Field(min_length=15, max_length=15)
    rotation: List[List[float]] = Field(min_length=3, max_length=3)
    t: List[float] = Field(min_length=3, max_length=3)

    class Config:
        extra = "forbid"

    @field_validator("theta_deg", "rotation")
    @classmethod
    def three_columns(cls, v):
        if any(len(row) != 3 for row in v):
            raise ValueError("every row needs 3 entries")
        return v


class ParamsFile(BaseModel):
    format_version: int = 1
    hands: Dict[Literal["left", "right"], HandParamsFile]

    class Config:
        extra = "forbid"


class RigFile(BaseModel):
    """Rig file; the rest mesh is embedded OBJ text or a path relative to the file."""
    format_version: int = 1
    handedness: Literal["left", "right"]
    parents: List[int]
    joint_positions: List[List[float]]
    mesh_obj: Optional[str] = None
    mesh_path: Optional[str] = None
    skin_indices: List[List[int]]
    skin_weights: List[List[float]]
    limits_deg: Optional[List[List[float]]] = None
    segments: Optional[List[int]] = None

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def one_mesh_source(self):
        if (self.mesh_obj is None) == (self.mesh_path is None):
            raise ValueError("exactly one of mesh_obj and mesh_path is required")
        return self


# ============= Manifest records =============

class ConfigRecord(BaseModel):
    kind: Literal["config"] = "config"
    command: str
    seed: int
    config: dict
    objective: Dict[str, str] = Field(default_factory=lambda: {"pen": "sum of squared depths", "limits": "clamping"})


class IterationRecord(BaseModel):
    kind: Literal["iteration"] = "iteration"
    restart: int
    iteration: int
    sigma: float
    total: float
    image_term: float
    pen_term: float
    limit_term: float
    best_image_term: float


class SnapshotRecord(BaseModel):
    kind: Literal["snapshot"] = "snapshot"
    restart: int
    iteration: int
    params: str
    hard: str
    soft: str


class RestartRecord(BaseModel):
    kind: Literal["restart"] = "restart"
    restart: int
    seed: int
    status: Literal["converged", "completed", "aborted"]
    iterations: int
    best_iteration: int
    best_image_term: Optional[float] = None
    error: Optional[str] = None


class FrameRecord(BaseModel):
    kind: Literal["frame"] = "frame"
    frame: int
    alpha: float
    refined: bool
    pen_term: float
    files: List[str]


class FinalRecord(BaseModel):
    kind: Literal["final"] = "final"
    status: str
    best_restart: Optional[int] = None
    image_term: Optional[float] = None
    converged: Optional[bool] = None
    files: List[str] = Field(default_factory=list)
    details: dict = Field(default_factory=dict)
