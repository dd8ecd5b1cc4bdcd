"""Random obstacle layouts with a guaranteed corridor between the corners."""

from __future__ import annotations

import itertools

import numpy as np
from scipy import ndimage

from ..geometry import Obstacle, Workspace
from .config import WorkspaceSpec


class GenerationError(RuntimeError):
    pass


def corners_connected(w: Workspace, margin: float, resolution: float) -> bool:
    """Whether every bounds corner joins one free component of a margin grid.

    A grid cell is free when its center keeps at least ``margin`` (per axis)
    from every obstacle and from the bounds.
    """
    lo, hi = np.array(w.bounds_min), np.array(w.bounds_max)
    shape = np.maximum(np.ceil((hi - lo) / resolution).astype(int), 1)
    axes = [lo[k] + (np.arange(shape[k]) + 0.5) * (hi[k] - lo[k]) / shape[k] for k in range(w.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(grids, axis=-1)
    free = np.all((pts > lo + margin) & (pts < hi - margin), axis=-1)
    for a, b in zip(w.obs_min, w.obs_max):
        free &= ~np.all((pts >= a - margin) & (pts <= b + margin), axis=-1)
    labels, _ = ndimage.label(free)
    corner_ids = set()
    for corner in itertools.product(*[(0, 1)] * w.dim):
        target = np.where(corner, hi - margin, lo + margin)
        dist = np.linalg.norm(pts - target, axis=-1)
        dist[~free] = np.inf
        idx = np.unravel_index(np.argmin(dist), dist.shape)
        # the corner must be reachable within a couple of cells
        if not np.isfinite(dist[idx]) or dist[idx] > 2 * resolution * np.sqrt(w.dim) + margin:
            return False
        corner_ids.add(int(labels[idx]))
    return len(corner_ids) == 1


def _sample_layout(spec: WorkspaceSpec, rng: np.random.Generator, wid: str) -> Workspace:
    lo, hi = np.array(spec.bounds_min), np.array(spec.bounds_max)
    n = int(rng.integers(spec.n_obstacles[0], spec.n_obstacles[1] + 1))
    obstacles = []
    for _ in range(n):
        if spec.square:
            size = np.full(spec.dim, rng.uniform(*spec.obstacle_size))
        else:
            size = rng.uniform(spec.obstacle_size[0], spec.obstacle_size[1], spec.dim)
        corner = lo + rng.random(spec.dim) * (hi - lo - size)
        obstacles.append(Obstacle(tuple(corner), tuple(corner + size)))
    return Workspace(spec.dim, spec.kind, tuple(lo), tuple(hi), tuple(obstacles), wid)


def generate_workspace(spec: WorkspaceSpec, rng: np.random.Generator, wid: str) -> Workspace:
    for _ in range(spec.max_attempts):
        w = _sample_layout(spec, rng, wid)
        if corners_connected(w, spec.margin, spec.grid_resolution):
            return w
    raise GenerationError(
        f"no layout with a free corridor after {spec.max_attempts} attempts for {wid}; "
        "use fewer or smaller obstacles"
    )


def gen_workspaces(spec: WorkspaceSpec, extra: int = 0) -> dict[str, list[Workspace]]:
    """Seen (training), unseen (test-only) and encoder-only layouts.

    Ids encode the split: ``seen-000``, ``unseen-000``, ``cae-000``.
    """
    rng = np.random.default_rng(spec.seed)
    out = {"seen": [], "unseen": [], "cae": []}
    for split, count in (("seen", spec.n_train), ("unseen", spec.n_unseen), ("cae", extra)):
        for i in range(count):
            out[split].append(generate_workspace(spec, rng, f"{split}-{i:03d}"))
    return out
