"""Pipeline configuration: desk-scale defaults per workspace kind, JSON overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path as FsPath

from ..geometry import KINDS, PLAN_STEP, STRICT_STEP, RigidBody
from ..models import ENCODER_HIDDEN, PNET_HIDDEN, DROPOUT_P, LAMBDA, default_latent_dim
from ..pointcloud import N_PC


@dataclass
class WorkspaceSpec:
    kind: str = "simple2d"
    n_train: int = 10
    n_unseen: int = 2
    n_obstacles: tuple[int, int] = (7, 7)
    obstacle_size: tuple[float, float] = (5.0, 5.0)
    square: bool = True
    bounds_min: tuple[float, ...] = (-20.0, -20.0)
    bounds_max: tuple[float, ...] = (20.0, 20.0)
    # clearance of the grid path that must join the workspace corners
    margin: float = 0.5
    grid_resolution: float = 0.5
    max_attempts: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.n_train <= 0 or self.n_unseen <= 0:
            raise ValueError("workspace counts must be positive")
        lo, hi = self.n_obstacles
        if not 0 <= lo <= hi:
            raise ValueError(f"bad obstacle count range {self.n_obstacles}")
        smin, smax = self.obstacle_size
        extent = min(b - a for a, b in zip(self.bounds_min, self.bounds_max))
        if not 0 < smin <= smax <= extent:
            raise ValueError(f"obstacle sizes {self.obstacle_size} do not fit the bounds")

    @property
    def dim(self) -> int:
        return len(self.bounds_min)


@dataclass
class DataConfig:
    paths_per_workspace: int = 100
    problems_per_unseen: int = 50
    seen_problems: int = 100
    goal_radius: float = 1.0
    # extra obstacle layouts used only to pretrain the encoder
    cae_extra_workspaces: int = 40
    n_pc: int = N_PC
    expert_iters: int = 2000
    eta: float = 2.0
    gamma: float | None = None
    goal_bias: float = 0.05
    min_separation: float = 0.25
    retry_factor: int = 5


@dataclass
class ModelConfig:
    latent_dim: int = 28
    encoder_hidden: tuple[int, ...] = ENCODER_HIDDEN
    pnet_hidden: tuple[int, ...] = PNET_HIDDEN
    dropout_p: float = DROPOUT_P
    cae_epochs: int = 400
    cae_batch: int = 16
    cae_lr: float = 1e-3
    lam: float = LAMBDA
    pnet_epochs: int = 300
    pnet_batch: int = 100
    pnet_lr: float = 1e-3
    val_fraction: float = 0.1


@dataclass
class PlanConfig:
    bidir_iters: int = 80
    replan_depth: int = 6
    plan_step: float = PLAN_STEP
    strict_step: float = STRICT_STEP
    stochastic: bool = True
    fallback_iters: int = 20000
    hybrid_region: str = "local_then_full"
    baseline_iters: int = 20000
    # the baseline reports the time to its first solution
    baseline_first_solution: bool = True


@dataclass
class PipelineConfig:
    workspace: WorkspaceSpec = field(default_factory=WorkspaceSpec)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    body_size: tuple[float, float] = (3.0, 1.0)
    seed: int = 0
    bench_seeds: tuple[int, ...] = (0,)
    workers: int = 1

    @property
    def kind(self) -> str:
        return self.workspace.kind

    def body(self) -> RigidBody | None:
        return RigidBody.rectangle(*self.body_size) if self.kind == "rigid2d" else None

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def defaults_for(kind: str) -> PipelineConfig:
    """Desk-scale defaults for one workspace kind."""
    if kind == "simple2d" or kind == "rigid2d":
        ws = WorkspaceSpec(kind=kind)
        if kind == "rigid2d":
            ws.margin = 1.6  # body circumradius
    elif kind == "complex2d":
        ws = WorkspaceSpec(kind=kind, n_obstacles=(10, 10), obstacle_size=(2.0, 8.0), square=False)
    elif kind == "complex3d":
        ws = WorkspaceSpec(
            kind=kind,
            n_obstacles=(10, 10),
            obstacle_size=(3.0, 10.0),
            square=False,
            bounds_min=(-20.0, -20.0, -20.0),
            bounds_max=(20.0, 20.0, 20.0),
            grid_resolution=1.0,
        )
    else:
        raise ValueError(f"unknown kind {kind!r}")
    cfg = PipelineConfig(workspace=ws)
    cfg.model.latent_dim = default_latent_dim(ws.dim)
    return cfg


def _merge(obj, overrides: dict):
    for f in fields(obj):
        if f.name not in overrides:
            continue
        cur = getattr(obj, f.name)
        val = overrides[f.name]
        if is_dataclass(cur):
            _merge(cur, val)
        elif isinstance(cur, tuple):
            setattr(obj, f.name, tuple(val))
        else:
            setattr(obj, f.name, val)
    unknown = set(overrides) - {f.name for f in fields(obj)}
    if unknown:
        raise ValueError(f"unknown configuration keys for {type(obj).__name__}: {sorted(unknown)}")
    if hasattr(obj, "__post_init__"):
        obj.__post_init__()
    return obj


def from_dict(data: dict, kind: str | None = None, seed: int | None = None) -> PipelineConfig:
    """Kind defaults overridden by ``data`` (nested like :meth:`PipelineConfig.to_dict`)."""
    k = kind or data.get("workspace", {}).get("kind", "simple2d")
    cfg = _merge(defaults_for(k), data)
    if kind is not None and cfg.workspace.kind != kind:
        cfg.workspace = replace(cfg.workspace, kind=kind)
    if seed is not None:
        cfg.seed = seed
    return cfg


def load_config(path=None, kind: str | None = None, seed: int | None = None) -> PipelineConfig:
    data = json.loads(FsPath(path).read_text()) if path else {}
    return from_dict(data, kind, seed)


def derive_seed(master: int, *labels) -> int:
    """Stable child seed for a named pipeline stage."""
    text = ":".join([str(master), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")
