"""Obstacle surface point clouds and the affine normalisation shared by the nets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .geometry import Workspace

N_PC = 1400


@dataclass(frozen=True, eq=False)
class Bounds:
    """Axis-aligned box used to map coordinates onto ``[-1, 1]``."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min, dtype=float)
        hi = np.array(self.max, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or not np.all(lo < hi):
            raise ValueError(f"invalid bounds {lo} / {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def of_workspace(cls, w: Workspace) -> "Bounds":
        return cls(np.array(w.bounds_min), np.array(w.bounds_max))

    @classmethod
    def of_states(cls, w: Workspace) -> "Bounds":
        return cls(*w.state_bounds())

    def translated(self, v) -> "Bounds":
        return Bounds(self.min + v, self.max + v)

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Bounds":
        return cls(np.array(d["min"]), np.array(d["max"]))


def normalize(values, b: Bounds) -> np.ndarray:
    """Affine map sending ``b.min`` to -1 and ``b.max`` to +1 (no clamping)."""
    values = np.asarray(values, dtype=float)
    return (values - b.min) / (b.max - b.min) * 2.0 - 1.0


def denormalize(values, b: Bounds) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return (values + 1.0) / 2.0 * (b.max - b.min) + b.min


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    source_workspace_id: str = ""

    @property
    def n_pc(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict:
        return {
            "workspace_id": self.source_workspace_id,
            "n_pc": self.n_pc,
            "points": self.points.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PointCloud":
        pts = np.array(d["points"], dtype=float)
        if pts.ndim != 2 or len(pts) != int(d["n_pc"]):
            raise ValueError(f"cloud declares {d['n_pc']} points but holds {pts.shape}")
        return cls(pts, str(d["workspace_id"]))

    def save(self, path) -> None:
        FsPath(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "PointCloud":
        return cls.from_dict(json.loads(FsPath(path).read_text()))


def face_areas(w: Workspace) -> np.ndarray:
    """Area of every face, shape ``(n_obstacles, 2 * dim)``.

    Face ``2 * k`` is the ``min`` face normal to axis ``k`` and ``2 * k + 1``
    the ``max`` face. In 2D the "area" is the edge length.
    """
    ext = w.obs_max - w.obs_min
    areas = np.empty((len(ext), 2 * w.dim))
    for k in range(w.dim):
        a = np.prod(np.delete(ext, k, axis=1), axis=1)
        areas[:, 2 * k] = a
        areas[:, 2 * k + 1] = a
    return areas


def sample_obstacle_cloud(w: Workspace, n_pc: int = N_PC, seed: int = 0) -> PointCloud:
    """Draw ``n_pc`` points uniformly over the total obstacle surface."""
    if not len(w.obstacles):
        raise ValueError(f"workspace {w.id!r} has no obstacles; nothing to encode")
    if n_pc <= 0:
        raise ValueError("n_pc must be positive")
    rng = np.random.default_rng(seed)
    areas = face_areas(w).ravel()
    face = rng.choice(len(areas), size=n_pc, p=areas / areas.sum())
    obs, side = np.divmod(face, 2 * w.dim)
    axis, upper = np.divmod(side, 2)
    lo, hi = w.obs_min[obs], w.obs_max[obs]
    pts = lo + rng.random((n_pc, w.dim)) * (hi - lo)
    rows = np.arange(n_pc)
    pts[rows, axis] = np.where(upper == 1, hi[rows, axis], lo[rows, axis])
    return PointCloud(pts, w.id)


def on_surface(points, w: Workspace, tol: float = 1e-9) -> np.ndarray:
    """Whether each point lies on a face of some obstacle (within ``tol``)."""
    p = np.asarray(points, float)[:, None, :]
    within = (p >= w.obs_min - tol) & (p <= w.obs_max + tol)
    on_plane = (np.abs(p - w.obs_min) <= tol) | (np.abs(p - w.obs_max) <= tol)
    hit = np.zeros(within.shape[:2], dtype=bool)
    for k in range(w.dim):
        others = np.delete(within, k, axis=2).all(axis=2)
        hit |= others & on_plane[..., k]
    return hit.any(axis=1)


def flatten_cloud(pc: PointCloud, b: Bounds) -> np.ndarray:
    """Normalised cloud, rows sorted lexicographically, flattened row-major."""
    pts = normalize(pc.points, b)
    order = np.lexsort(pts.T[::-1])
    return pts[order].ravel()
