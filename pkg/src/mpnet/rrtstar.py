"""RRT* over the workspace state space.

Used three ways: to produce expert demonstrations, as the benchmark baseline,
and as the classical fallback inside hybrid replanning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    ANGLE_WEIGHT,
    PLAN_STEP,
    STRICT_STEP,
    ContractViolation,
    RigidBody,
    Workspace,
    path_feasible,
    point_in_free_space,
    segment_collision_free,
    state_delta,
    state_distance,
    wrap_angle,
)


@dataclass(frozen=True)
class GoalRegion:
    """Ball around ``center`` in the state metric."""

    center: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ContractViolation("goal radius must be positive")

    def contains(self, x, rigid: bool = False) -> bool:
        return bool(state_distance(x, self.center, rigid) <= self.radius)


@dataclass(frozen=True)
class RrtConfig:
    max_iters: int = 3000
    eta: float = 2.0
    goal_bias: float = 0.05
    # rewire-radius scale; None derives it from the state-space volume
    gamma: float | None = None
    seed: int = 0
    step: float = PLAN_STEP
    strict_step: float = STRICT_STEP
    # stop as soon as any goal node exists (first-solution mode)
    stop_on_first: bool = False
    # goal nodes must see the goal center; the path then ends exactly there
    snap_to_center: bool = False

    def __post_init__(self):
        if self.eta <= 0 or self.max_iters <= 0 or not 0 <= self.goal_bias < 1 or (
            self.gamma is not None and self.gamma <= 0
        ):
            raise ContractViolation(f"invalid RRT* configuration {self}")

    def with_seed(self, seed: int) -> "RrtConfig":
        return replace(self, seed=int(seed))


@dataclass
class RrtTree:
    nodes: np.ndarray
    parent: np.ndarray
    cost: np.ndarray
    children: list[list[int]] = field(default_factory=list)
    size: int = 0

    @classmethod
    def rooted(cls, root: np.ndarray, capacity: int) -> "RrtTree":
        t = cls(
            nodes=np.zeros((capacity, len(root))),
            parent=np.full(capacity, -1, dtype=np.int64),
            cost=np.zeros(capacity),
        )
        t.nodes[0] = root
        t.children.append([])
        t.size = 1
        return t

    def add(self, x: np.ndarray, parent: int, cost: float) -> int:
        i = self.size
        self.nodes[i] = x
        self.parent[i] = parent
        self.cost[i] = cost
        self.children.append([])
        self.children[parent].append(i)
        self.size += 1
        return i

    def reparent(self, i: int, new_parent: int, new_cost: float) -> None:
        self.children[self.parent[i]].remove(i)
        self.parent[i] = new_parent
        self.children[new_parent].append(i)
        delta = new_cost - self.cost[i]
        stack = [i]
        while stack:
            j = stack.pop()
            self.cost[j] += delta
            stack.extend(self.children[j])

    def branch(self, i: int) -> list[np.ndarray]:
        out = []
        while i >= 0:
            out.append(self.nodes[i].copy())
            i = int(self.parent[i])
        return out[::-1]

    def check(self, rigid: bool = False, tol: float = 1e-9) -> bool:
        """Parent links acyclic and every cost equals parent cost plus edge length."""
        for i in range(1, self.size):
            seen = 0
            j = i
            while j > 0:
                j = int(self.parent[j])
                seen += 1
                if j < 0 or seen > self.size:
                    return False
            p = self.parent[i]
            edge = float(state_distance(self.nodes[p], self.nodes[i], rigid))
            if abs(self.cost[i] - (self.cost[p] + edge)) > tol * max(1.0, self.cost[i]):
                return False
        return self.parent[0] == -1 and self.cost[0] == 0.0


@dataclass
class RrtResult:
    path: list[np.ndarray] | None
    cost: float
    iterations: int
    tree: RrtTree
    best_cost_history: list[float] = field(default_factory=list)


def default_gamma(lo, hi, factor: float = 1.1) -> float:
    """``factor`` times the smallest radius scale that keeps RRT* asymptotically optimal.

    Uses the bounding-box volume as the free-space measure, which can only
    overestimate it (and so errs toward larger radii).
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    d = len(lo)
    unit_ball = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    volume = float(np.prod(hi - lo))
    return factor * 2.0 * (1.0 + 1.0 / d) ** (1.0 / d) * (volume / unit_ball) ** (1.0 / d)


def _sample(rng, lo, hi, rigid):
    x = lo + rng.random(len(lo)) * (hi - lo)
    if rigid:
        x[2] = wrap_angle(x[2])
    return x


def rrtstar_search(
    w: Workspace,
    x_init,
    goal: GoalRegion,
    cfg: RrtConfig = RrtConfig(),
    body: RigidBody | None = None,
    debug: bool = False,
) -> RrtResult:
    """Full RRT* run returning the tree and solution bookkeeping."""
    rigid = w.is_rigid
    x_init = np.asarray(x_init, dtype=float)
    if x_init.shape != (w.state_dim,) or goal.center.shape != x_init.shape:
        raise ContractViolation("start/goal dimension does not match the workspace")
    if not point_in_free_space(x_init, w, body):
        raise ContractViolation("RRT* start state is in collision")
    rng = np.random.default_rng(cfg.seed)
    lo, hi = w.state_bounds()
    d = w.state_dim
    gamma = cfg.gamma if cfg.gamma is not None else default_gamma(lo, hi)
    tree = RrtTree.rooted(x_init, cfg.max_iters + 1)
    weights = np.array([1.0, 1.0, ANGLE_WEIGHT]) if rigid else None

    def dist_to(x, n):
        delta = state_delta(tree.nodes[:n], x, rigid)
        if rigid:
            delta = delta * weights
        return np.sqrt(np.einsum("ij,ij->i", delta, delta))

    goal_nodes: dict[int, float] = {}  # node -> terminal edge length

    def consider_goal(i):
        x = tree.nodes[i]
        if not goal.contains(x, rigid):
            return
        if cfg.snap_to_center:
            tail = float(state_distance(x, goal.center, rigid))
            if tail > 0 and not segment_collision_free(x, goal.center, w, cfg.step, body):
                return
            goal_nodes[i] = tail
        else:
            goal_nodes[i] = 0.0

    def best():
        if not goal_nodes:
            return None, math.inf
        i = min(goal_nodes, key=lambda k: (tree.cost[k] + goal_nodes[k], k))
        return i, tree.cost[i] + goal_nodes[i]

    consider_goal(0)
    history = []
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if cfg.stop_on_first and goal_nodes:
            break
        target = goal.center if rng.random() < cfg.goal_bias else _sample(rng, lo, hi, rigid)
        n = tree.size
        dists = dist_to(target, n)
        near_i = int(np.argmin(dists))
        dn = float(dists[near_i])
        if dn == 0.0:
            history.append(best()[1])
            continue
        x_near = tree.nodes[near_i]
        frac = min(1.0, cfg.eta / dn)
        x_new = x_near + frac * state_delta(x_near, target, rigid)
        if rigid:
            x_new[2] = wrap_angle(x_new[2])
        if not point_in_free_space(x_new, w, body):
            history.append(best()[1])
            continue
        radius = min(gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / d), cfg.eta)
        d_new = dist_to(x_new, n)
        near = np.nonzero(d_new <= radius)[0]
        # choose parent: cheapest collision-free candidate, nearest node always considered
        cands = set(near.tolist()) | {near_i}
        order = sorted(cands, key=lambda k: (tree.cost[k] + d_new[k], k))
        parent = -1
        for k in order:
            if segment_collision_free(tree.nodes[k], x_new, w, cfg.step, body):
                parent = k
                break
        if parent < 0:
            history.append(best()[1])
            continue
        new = tree.add(x_new, parent, float(tree.cost[parent] + d_new[parent]))
        # rewire
        for k in near:
            k = int(k)
            if k == parent:
                continue
            c = tree.cost[new] + d_new[k]
            if c < tree.cost[k] - 1e-12 and segment_collision_free(x_new, tree.nodes[k], w, cfg.step, body):
                tree.reparent(k, new, c)
        consider_goal(new)
        history.append(best()[1])
        if debug:
            assert tree.check(rigid), f"tree invariant broken at iteration {it}"

    # strict validation: fall back through goal nodes by cost if a path grazes
    for i in sorted(goal_nodes, key=lambda k: (tree.cost[k] + goal_nodes[k], k)):
        path = tree.branch(i)
        if cfg.snap_to_center and goal_nodes[i] > 0:
            path.append(goal.center.copy())
        if path_feasible(path, w, cfg.strict_step, body):
            return RrtResult(path, float(tree.cost[i] + goal_nodes[i]), it, tree, history)
    return RrtResult(None, math.inf, it, tree, history)


def rrtstar_plan(
    w: Workspace,
    x_init,
    goal: GoalRegion,
    cfg: RrtConfig = RrtConfig(),
    body: RigidBody | None = None,
) -> tuple[list[np.ndarray], float] | None:
    """Plan with RRT*; returns ``(path, cost)`` or ``None`` when the budget runs out."""
    x_init = np.asarray(x_init, dtype=float)
    if goal.contains(x_init, w.is_rigid) and not cfg.snap_to_center:
        if not point_in_free_space(x_init, w, body):
            raise ContractViolation("RRT* start state is in collision")
        return [x_init.copy()], 0.0
    res = rrtstar_search(w, x_init, goal, cfg, body)
    if res.path is None:
        return None
    return res.path, res.cost
