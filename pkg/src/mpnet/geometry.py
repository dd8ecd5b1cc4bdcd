"""Workspaces, collision predicates and straight-line steering.

Everything in here is a pure function of immutable inputs. States are plain
``float64`` numpy vectors; a path is a sequence of such vectors. Point robots
live in the workspace itself (``d == dim``); the rigid-body robot is a convex
polygon with pose ``(x, y, theta)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

KINDS = ("simple2d", "complex2d", "complex3d", "rigid2d")

PLAN_STEP = 0.05
STRICT_STEP = 0.005
ANGLE_WEIGHT = 1.0


class ContractViolation(ValueError):
    """Raised when a caller breaks an input contract (shapes, signs, kinds)."""


def wrap_angle(theta):
    """Map angles into ``[-pi, pi)``."""
    return (np.asarray(theta, dtype=float) + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Obstacle:
    """Closed axis-aligned box."""

    min_corner: tuple[float, ...]
    max_corner: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min_corner)
        hi = tuple(float(v) for v in self.max_corner)
        if len(lo) != len(hi):
            raise ContractViolation("obstacle corners differ in dimension")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ContractViolation(f"obstacle min {lo} not below max {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.min_corner) + np.array(self.max_corner)) / 2.0

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.max_corner) - np.array(self.min_corner)


@dataclass(frozen=True)
class Workspace:
    """Bounded box world with box obstacles.

    Both the obstacles and the outside of ``bounds`` are closed sets, so a
    state touching a boundary is in collision.
    """

    dim: int
    kind: str
    bounds_min: tuple[float, ...]
    bounds_max: tuple[float, ...]
    obstacles: tuple[Obstacle, ...] = ()
    id: str = ""
    obs_min: np.ndarray = field(init=False, repr=False, compare=False)
    obs_max: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ContractViolation(f"workspace dim must be 2 or 3, got {self.dim}")
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown workspace kind {self.kind!r}")
        if (self.kind == "complex3d") != (self.dim == 3):
            raise ContractViolation(f"kind {self.kind} incompatible with dim {self.dim}")
        lo = tuple(float(v) for v in self.bounds_min)
        hi = tuple(float(v) for v in self.bounds_max)
        if len(lo) != self.dim or len(hi) != self.dim or not all(a < b for a, b in zip(lo, hi)):
            raise ContractViolation(f"bad bounds {lo} / {hi} for dim {self.dim}")
        obstacles = tuple(self.obstacles)
        for ob in obstacles:
            if len(ob.min_corner) != self.dim:
                raise ContractViolation("obstacle dimension differs from workspace")
            if any(a < b0 for a, b0 in zip(ob.min_corner, lo)) or any(
                b > b1 for b, b1 in zip(ob.max_corner, hi)
            ):
                raise ContractViolation(f"obstacle {ob} leaves the workspace bounds")
        object.__setattr__(self, "bounds_min", lo)
        object.__setattr__(self, "bounds_max", hi)
        object.__setattr__(self, "obstacles", obstacles)
        if obstacles:
            omin = np.array([ob.min_corner for ob in obstacles], dtype=float)
            omax = np.array([ob.max_corner for ob in obstacles], dtype=float)
        else:
            omin = np.zeros((0, self.dim))
            omax = np.zeros((0, self.dim))
        omin.setflags(write=False)
        omax.setflags(write=False)
        object.__setattr__(self, "obs_min", omin)
        object.__setattr__(self, "obs_max", omax)

    @property
    def is_rigid(self) -> bool:
        return self.kind == "rigid2d"

    @property
    def state_dim(self) -> int:
        return 3 if self.is_rigid else self.dim

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.bounds_max) - np.array(self.bounds_min)

    def state_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box containing every valid state (theta spans ``[-pi, pi]``)."""
        lo, hi = np.array(self.bounds_min), np.array(self.bounds_max)
        if self.is_rigid:
            lo = np.append(lo, -math.pi)
            hi = np.append(hi, math.pi)
        return lo, hi

    def with_bounds(self, lo: Sequence[float], hi: Sequence[float]) -> "Workspace":
        """Same obstacles clipped to a sub-box; obstacles outside it are dropped."""
        lo = np.maximum(np.asarray(lo, float), self.bounds_min)
        hi = np.minimum(np.asarray(hi, float), self.bounds_max)
        kept = []
        for ob in self.obstacles:
            a = np.maximum(ob.min_corner, lo)
            b = np.minimum(ob.max_corner, hi)
            if np.all(a < b):
                kept.append(Obstacle(tuple(a), tuple(b)))
        return Workspace(self.dim, self.kind, tuple(lo), tuple(hi), tuple(kept), self.id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dim": self.dim,
            "kind": self.kind,
            "bounds": {"min": list(self.bounds_min), "max": list(self.bounds_max)},
            "obstacles": [
                {"min": list(ob.min_corner), "max": list(ob.max_corner)} for ob in self.obstacles
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Workspace":
        try:
            return cls(
                dim=int(data["dim"]),
                kind=str(data["kind"]),
                bounds_min=tuple(data["bounds"]["min"]),
                bounds_max=tuple(data["bounds"]["max"]),
                obstacles=tuple(Obstacle(tuple(o["min"]), tuple(o["max"])) for o in data["obstacles"]),
                id=str(data.get("id", "")),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed workspace document: {exc!r}") from exc

    def save(self, path) -> None:
        FsPath(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Workspace":
        return cls.from_dict(json.loads(FsPath(path).read_text()))


@dataclass(frozen=True, eq=False)
class RigidBody:
    """Convex polygon in the body frame, counterclockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ContractViolation("rigid body needs at least 3 planar vertices")
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.any(cross <= 0):
            raise ContractViolation("rigid body must be strictly convex and counterclockwise")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def rectangle(cls, length: float, width: float) -> "RigidBody":
        hx, hy = length / 2.0, width / 2.0
        return cls(np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]]))

    @property
    def radius(self) -> float:
        """Circumradius about the body origin."""
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def placed(self, poses: np.ndarray) -> np.ndarray:
        """World-frame vertices for each pose; returns shape ``(n, V, 2)``."""
        poses = np.atleast_2d(poses)
        c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
        vx, vy = self.vertices[:, 0], self.vertices[:, 1]
        x = poses[:, :1] + c[:, None] * vx - s[:, None] * vy
        y = poses[:, 1:2] + s[:, None] * vx + c[:, None] * vy
        return np.stack([x, y], axis=-1)


def _check_state(x, w: Workspace, body: RigidBody | None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.state_dim:
        raise ContractViolation(
            f"state dimension {x.shape[-1]} does not match {w.kind} (needs {w.state_dim})"
        )
    if w.is_rigid and body is None:
        raise ContractViolation("rigid2d workspace requires a rigid body")
    if not w.is_rigid and body is not None:
        raise ContractViolation(f"{w.kind} is a point-robot workspace; no body allowed")
    return x


def _points_free(points: np.ndarray, w: Workspace) -> np.ndarray:
    lo, hi = np.asarray(w.bounds_min), np.asarray(w.bounds_max)
    inside = np.all((points > lo) & (points < hi), axis=-1)
    if len(w.obstacles):
        hit = np.all(
            (points[:, None, :] >= w.obs_min) & (points[:, None, :] <= w.obs_max), axis=-1
        ).any(axis=1)
        inside &= ~hit
    return inside & np.all(np.isfinite(points), axis=-1)


def _poses_free(poses: np.ndarray, w: Workspace, body: RigidBody) -> np.ndarray:
    verts = body.placed(poses)  # (n, V, 2)
    lo, hi = np.asarray(w.bounds_min), np.asarray(w.bounds_max)
    free = np.all((verts > lo) & (verts < hi), axis=(1, 2))
    free &= np.all(np.isfinite(poses), axis=-1)
    if not len(w.obstacles) or not free.any():
        return free
    idx = np.nonzero(free)[0]
    verts = verts[idx]
    bmin, bmax = verts.min(axis=1), verts.max(axis=1)  # (n, 2)
    # obstacle axes x/y: overlap when intervals intersect (closed)
    overlap = np.all(
        (bmin[:, None, :] <= w.obs_max) & (bmax[:, None, :] >= w.obs_min), axis=-1
    )  # (n, k)
    # body edge normals
    edges = np.roll(verts, -1, axis=1) - verts  # (n, V, 2)
    normals = np.stack([edges[..., 1], -edges[..., 0]], axis=-1)
    proj_body = np.einsum("nev,nuv->neu", normals, verts)  # (n, E, V)
    pb_min, pb_max = proj_body.min(axis=-1), proj_body.max(axis=-1)  # (n, E)
    corners = np.stack(
        [
            np.stack([w.obs_min[:, 0], w.obs_min[:, 1]], -1),
            np.stack([w.obs_max[:, 0], w.obs_min[:, 1]], -1),
            np.stack([w.obs_max[:, 0], w.obs_max[:, 1]], -1),
            np.stack([w.obs_min[:, 0], w.obs_max[:, 1]], -1),
        ],
        axis=1,
    )  # (k, 4, 2)
    proj_obs = np.einsum("nev,kcv->nkec", normals, corners)
    po_min, po_max = proj_obs.min(axis=-1), proj_obs.max(axis=-1)  # (n, k, E)
    overlap &= np.all(
        (pb_min[:, None, :] <= po_max) & (pb_max[:, None, :] >= po_min), axis=-1
    )
    free[idx] = ~overlap.any(axis=1)
    return free


def states_free(states, w: Workspace, body: RigidBody | None = None) -> np.ndarray:
    """Vectorised :func:`point_in_free_space` over rows of ``states``."""
    states = np.atleast_2d(_check_state(states, w, body))
    if w.is_rigid:
        return _poses_free(states, w, body)
    return _points_free(states, w)


def point_in_free_space(x, w: Workspace, body: RigidBody | None = None) -> bool:
    """True iff ``x`` is a collision-free state inside the workspace bounds."""
    x = _check_state(x, w, body)
    if x.ndim != 1:
        raise ContractViolation("expected a single state vector")
    return bool(states_free(x, w, body)[0])


def state_delta(x1, x2, rigid: bool) -> np.ndarray:
    """Displacement from ``x1`` to ``x2``; the heading takes the shortest arc."""
    d = np.asarray(x2, float) - np.asarray(x1, float)
    if rigid:
        d = d.copy()
        d[..., 2] = wrap_angle(d[..., 2])
    return d


def state_distance(x1, x2, rigid: bool = False, angle_weight: float = ANGLE_WEIGHT):
    """Euclidean metric; on SE(2) the heading is weighted and wrap-aware."""
    d = state_delta(x1, x2, rigid)
    if rigid:
        d = d * np.array([1.0, 1.0, angle_weight])
    return np.linalg.norm(d, axis=-1)


def interpolate(x1, x2, deltas, rigid: bool = False) -> np.ndarray:
    """States ``(1 - t) x1 + t x2`` for each ``t`` in ``deltas``."""
    x1 = np.asarray(x1, float)
    deltas = np.asarray(deltas, float)[:, None]
    out = x1 + deltas * state_delta(x1, x2, rigid)
    if rigid:
        out[:, 2] = wrap_angle(out[:, 2])
    return out


def segment_samples(x1, x2, step: float, rigid: bool = False) -> np.ndarray:
    """Sample grid used by :func:`segment_collision_free`.

    Samples start at the lexicographically smaller endpoint and advance by
    ``step`` in the state metric, with the far endpoint always appended. This
    makes the grid independent of argument order and nested under step
    halving.
    """
    if not step > 0:
        raise ContractViolation(f"steering step must be positive, got {step}")
    a, b = np.asarray(x1, float), np.asarray(x2, float)
    if a.shape != b.shape:
        raise ContractViolation("segment endpoints differ in dimension")
    if tuple(b) < tuple(a):
        a, b = b, a
    length = float(state_distance(a, b, rigid))
    if not math.isfinite(length):
        return np.array([a, b])
    if length == 0.0:
        return a[None, :].copy()
    n = int(math.floor(length / step))
    deltas = np.arange(n + 1) * (step / length)
    deltas = deltas[deltas < 1.0]
    deltas = np.append(deltas, 1.0)
    return interpolate(a, b, deltas, rigid)


def segment_collision_free(
    x1, x2, w: Workspace, step: float = PLAN_STEP, body: RigidBody | None = None
) -> bool:
    """Discrete steering check of the straight segment ``x1 -> x2``."""
    _check_state(x1, w, body)
    _check_state(x2, w, body)
    samples = segment_samples(x1, x2, step, w.is_rigid)
    # cheap endpoint rejection first: most failed checks fail there
    if not states_free(samples[[0, -1]], w, body).all():
        return False
    return bool(states_free(samples, w, body).all())


def path_feasible(path: Sequence, w: Workspace, step: float = STRICT_STEP, body: RigidBody | None = None) -> bool:
    """True iff every consecutive segment of ``path`` is collision free."""
    if len(path) == 0:
        raise ContractViolation("cannot check an empty path")
    if len(path) == 1:
        return point_in_free_space(path[0], w, body)
    return all(
        segment_collision_free(path[i], path[i + 1], w, step, body) for i in range(len(path) - 1)
    )


def path_cost(path: Sequence, rigid: bool = False) -> float:
    """Sum of metric distances between consecutive states."""
    if len(path) < 2:
        return 0.0
    arr = np.asarray(path, dtype=float)
    return float(np.sum(state_distance(arr[:-1], arr[1:], rigid)))


def as_path(states: Iterable) -> list[np.ndarray]:
    return [np.asarray(s, dtype=float) for s in states]
