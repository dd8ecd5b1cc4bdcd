"""Online neural planning: bidirectional generation, lazy state contraction,
neural / hybrid replanning, and the top-level query."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import (
    PLAN_STEP,
    STRICT_STEP,
    ContractViolation,
    RigidBody,
    Workspace,
    path_cost,
    path_feasible,
    point_in_free_space,
    segment_collision_free,
    states_free,
)
from .models import EncoderModel, NonFiniteOutput, PlannerModel, encode, pnet_step
from .pointcloud import PointCloud
from .rrtstar import GoalRegion, RrtConfig, rrtstar_plan

MODES = ("NR", "HR")
REGIONS = ("local", "full", "local_then_full")


@dataclass(frozen=True)
class MpnetConfig:
    bidir_iters: int = 80
    replan_depth: int = 6
    mode: str = "NR"
    plan_step: float = PLAN_STEP
    strict_step: float = STRICT_STEP
    stochastic: bool = True
    seed: int = 0
    hybrid: RrtConfig = RrtConfig(max_iters=20000, stop_on_first=True, snap_to_center=True)
    # where the fallback RRT* may search: a box around the broken segment
    # inflated by region_inflation * workspace extent, the whole workspace,
    # or the box first and the workspace if that fails
    hybrid_region: str = "local_then_full"
    region_inflation: float = 0.25

    def __post_init__(self):
        if self.bidir_iters <= 0 or self.replan_depth < 1:
            raise ContractViolation("bidir_iters must be > 0 and replan_depth >= 1")
        if self.mode not in MODES or self.hybrid_region not in REGIONS:
            raise ContractViolation(f"bad mode {self.mode!r} or region {self.hybrid_region!r}")

    def with_mode(self, mode: str) -> "MpnetConfig":
        return replace(self, mode=mode)


@dataclass
class Counters:
    pnet_calls: int = 0
    nonfinite_outputs: int = 0
    steer_checks: int = 0
    replan_invocations: int = 0
    fallback_used: int = 0
    extensions_start: int = 0
    extensions_goal: int = 0


@dataclass
class PlanResult:
    path: list[np.ndarray] | None
    succeeded: bool
    time_us: int = 0
    encode_time_us: int = 0
    counters: Counters = field(default_factory=Counters)
    cost: float | None = None

    def to_dict(self) -> dict:
        return {
            "succeeded": self.succeeded,
            "cost": self.cost,
            "path": None if self.path is None else [s.tolist() for s in self.path],
            "time_us": self.time_us,
            "encode_time_us": self.encode_time_us,
            "counters": asdict(self.counters),
        }


@dataclass
class MpnetModels:
    encoder: EncoderModel
    planner: PlannerModel


@dataclass
class _Ctx:
    w: Workspace
    body: RigidBody | None
    z: np.ndarray
    pl: PlannerModel
    cfg: MpnetConfig
    rng: np.random.Generator
    counters: Counters

    def steer(self, a, b, step: float) -> bool:
        self.counters.steer_checks += 1
        return segment_collision_free(a, b, self.w, step, self.body)


def lazy_states_contraction(
    path: Sequence, w: Workspace, step: float = STRICT_STEP, body: RigidBody | None = None
) -> list[np.ndarray]:
    """Greedy shortcutting from the start.

    From the current anchor keep the farthest later state that can be reached
    in a straight line; when none can, keep the next state.
    """
    if len(path) == 0:
        raise ContractViolation("cannot contract an empty path")
    path = [np.asarray(s, dtype=float) for s in path]
    out = [path[0]]
    i = 0
    n = len(path)
    while i < n - 1:
        nxt = i + 1
        for j in range(n - 1, i + 1, -1):
            if segment_collision_free(path[i], path[j], w, step, body):
                nxt = j
                break
        out.append(path[nxt])
        i = nxt
    return out


def _grow(x_start, x_goal, ctx: _Ctx, trace: list | None = None) -> tuple[bool, list[np.ndarray]]:
    """Both trees grown alternately; returns (connected, start-to-goal list)."""
    a, b = [np.asarray(x_start, float)], [np.asarray(x_goal, float)]
    a_is_start = True
    for _ in range(ctx.cfg.bidir_iters):
        ctx.counters.pnet_calls += 1
        try:
            x_new = pnet_step(ctx.pl, ctx.z, a[-1], b[-1], ctx.rng, ctx.cfg.stochastic)
        except NonFiniteOutput:
            ctx.counters.nonfinite_outputs += 1
            x_new = None
        if x_new is not None:
            a.append(x_new)
            if a_is_start:
                ctx.counters.extensions_start += 1
            else:
                ctx.counters.extensions_goal += 1
            if trace is not None:
                trace.append("start" if a_is_start else "goal")
            if ctx.steer(a[-1], b[-1], ctx.cfg.plan_step):
                s, g = (a, b) if a_is_start else (b, a)
                return True, s + g[::-1]
        a, b = b, a
        a_is_start = not a_is_start
    s, g = (a, b) if a_is_start else (b, a)
    return False, s + g[::-1]


def neural_planner_bidir(
    x_start,
    x_goal,
    z: np.ndarray,
    pl: PlannerModel,
    w: Workspace,
    cfg: MpnetConfig,
    rng: np.random.Generator,
    body: RigidBody | None = None,
    counters: Counters | None = None,
    trace: list | None = None,
) -> list[np.ndarray] | None:
    """Grow paths from both ends toward each other; ``None`` if they never connect.

    ``trace`` (when given) receives ``"start"``/``"goal"`` for each extension.
    """
    ctx = _Ctx(w, body, z, pl, cfg, rng, counters if counters is not None else Counters())
    ok, path = _grow(x_start, x_goal, ctx, trace)
    return path if ok else None


def _drop_colliding(path: list[np.ndarray], ctx: _Ctx) -> list[np.ndarray]:
    if len(path) <= 2:
        return path
    free = states_free(np.array(path[1:-1]), ctx.w, ctx.body)
    return [path[0]] + [s for s, ok in zip(path[1:-1], free) if ok] + [path[-1]]


def _classical(a, b, ctx: _Ctx) -> list[np.ndarray] | None:
    w, cfg = ctx.w, ctx.cfg
    regions = {"local": ["local"], "full": ["full"], "local_then_full": ["local", "full"]}[cfg.hybrid_region]
    goal = GoalRegion(b, max(cfg.hybrid.eta, 1e-6))
    for region in regions:
        sub = w
        if region == "local":
            pad = cfg.region_inflation * w.extent
            pos_a, pos_b = a[: w.dim], b[: w.dim]
            sub = w.with_bounds(np.minimum(pos_a, pos_b) - pad, np.maximum(pos_a, pos_b) + pad)
        ctx.counters.fallback_used += 1
        rcfg = cfg.hybrid.with_seed(int(ctx.rng.integers(2**31)))
        rcfg = replace(rcfg, step=cfg.plan_step, strict_step=cfg.strict_step, snap_to_center=True)
        found = rrtstar_plan(sub, a, goal, rcfg, ctx.body)
        if found is not None:
            path = found[0]
            if len(path) == 1:  # start already at b
                path = [a, b]
            return path
    return None


def _repair(a, b, depth: int, ctx: _Ctx) -> list[np.ndarray] | None:
    if depth > 0:
        ctx.counters.replan_invocations += 1
        ok, sub = _grow(a, b, ctx)
        if ok or ctx.cfg.mode == "HR":
            sub = _drop_colliding(sub, ctx)
            sub = lazy_states_contraction(sub, ctx.w, ctx.cfg.strict_step, ctx.body)
            fixed = _replan(sub, depth - 1, ctx)
            if fixed is not None:
                return fixed
    if ctx.cfg.mode == "HR":
        return _classical(a, b, ctx)
    return None


def _replan(path: list[np.ndarray], depth: int, ctx: _Ctx) -> list[np.ndarray] | None:
    path = _drop_colliding(path, ctx)
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        if ctx.steer(a, b, ctx.cfg.strict_step):
            out.append(b)
            continue
        sub = _repair(a, b, depth, ctx)
        if sub is None:
            return None
        out.extend(sub[1:])
    return out


def replan(
    path: Sequence,
    z: np.ndarray,
    pl: PlannerModel,
    w: Workspace,
    cfg: MpnetConfig,
    depth: int,
    rng: np.random.Generator,
    body: RigidBody | None = None,
    counters: Counters | None = None,
) -> list[np.ndarray] | None:
    """Repair every non-steerable consecutive pair of ``path``.

    Intermediate states that are themselves in collision are discarded first
    since no segment through them can be repaired. NR mode recursively plans
    neurally up to ``depth`` levels; HR mode additionally hands pairs that
    stay broken to RRT*.
    """
    if depth < 0:
        raise ContractViolation("replan depth must be non-negative")
    ctx = _Ctx(w, body, z, pl, cfg, rng, counters if counters is not None else Counters())
    return _replan([np.asarray(s, float) for s in path], depth, ctx)


def mpnet_plan(
    w: Workspace,
    cloud: PointCloud | None,
    x_init,
    goal: GoalRegion,
    models: MpnetModels,
    cfg: MpnetConfig = MpnetConfig(),
    rng: np.random.Generator | None = None,
    body: RigidBody | None = None,
    latent: np.ndarray | None = None,
) -> PlanResult:
    """Answer one planning query.

    Encoding time is reported separately from planning time; pass ``latent``
    to reuse a code computed once per workspace.
    """
    x_init = np.asarray(x_init, dtype=float)
    pl = models.planner
    if pl.state_dim != w.state_dim or pl.rigid != w.is_rigid:
        raise ContractViolation(f"planner state dim {pl.state_dim} does not fit {w.kind}")
    if x_init.shape != (w.state_dim,) or goal.center.shape != x_init.shape:
        raise ContractViolation("query dimension does not match the workspace")
    if models.encoder.dim != w.dim:
        raise ContractViolation("encoder workspace dimension does not match")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    counters = Counters()
    enc_us = 0
    if latent is None:
        if cloud is None:
            raise ContractViolation("need a point cloud or a precomputed latent")
        t0 = time.perf_counter_ns()
        latent = encode(models.encoder, cloud)
        enc_us = (time.perf_counter_ns() - t0) // 1000
    ctx = _Ctx(w, body, latent, pl, cfg, rng, counters)
    t0 = time.perf_counter_ns()
    result = _plan(x_init, goal, ctx)
    elapsed = (time.perf_counter_ns() - t0) // 1000
    cost = None if result is None else path_cost(result, w.is_rigid)
    return PlanResult(result, result is not None, elapsed, enc_us, counters, cost)


def _plan(x_init, goal: GoalRegion, ctx: _Ctx) -> list[np.ndarray] | None:
    w, body, cfg = ctx.w, ctx.body, ctx.cfg
    if not point_in_free_space(x_init, w, body) or not point_in_free_space(goal.center, w, body):
        raise ContractViolation("start and goal center must be collision free")
    if goal.contains(x_init, w.is_rigid):
        return [x_init.copy()]
    ok, path = _grow(x_init, goal.center, ctx)
    if not ok and cfg.mode == "NR":
        return None
    path = lazy_states_contraction(path, w, cfg.strict_step, body)
    if ok and path_feasible(path, w, cfg.strict_step, body):
        return _accept(path, x_init, goal, ctx)
    repaired = _replan(path, cfg.replan_depth, ctx)
    if repaired is None:
        return None
    repaired = lazy_states_contraction(repaired, w, cfg.strict_step, body)
    if path_feasible(repaired, w, cfg.strict_step, body):
        return _accept(repaired, x_init, goal, ctx)
    return None


def _accept(path, x_init, goal: GoalRegion, ctx: _Ctx):
    # endpoint contract; both ends are fixed by construction
    if not np.array_equal(path[0], x_init) or not goal.contains(path[-1], ctx.w.is_rigid):
        return None
    return path
