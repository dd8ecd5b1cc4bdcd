"""Expert demonstrations, test problems and the on-disk dataset layout."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from ..geometry import (
    RigidBody,
    Workspace,
    path_cost,
    path_feasible,
    point_in_free_space,
    wrap_angle,
)
from ..planner import lazy_states_contraction
from ..pointcloud import PointCloud, sample_obstacle_cloud
from ..rrtstar import GoalRegion, RrtConfig, rrtstar_plan
from .config import PipelineConfig, derive_seed
from .workspaces import GenerationError, gen_workspaces

log = logging.getLogger(__name__)


def write_json(path, obj) -> str:
    """Write canonical JSON and return its sha256."""
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    path = FsPath(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(FsPath(path).read_bytes()).hexdigest()


@dataclass
class ExpertPath:
    start: np.ndarray
    goal: np.ndarray
    states: list[np.ndarray]
    raw_cost: float
    cost: float

    def to_dict(self) -> dict:
        return {
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "states": [s.tolist() for s in self.states],
            "raw_cost": self.raw_cost,
            "cost": self.cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpertPath":
        return cls(
            np.array(d["start"]),
            np.array(d["goal"]),
            [np.array(s) for s in d["states"]],
            float(d["raw_cost"]),
            float(d["cost"]),
        )


@dataclass
class Problem:
    id: str
    workspace_id: str
    split: str
    start: np.ndarray
    goal: np.ndarray
    radius: float
    reference_cost: float | None = None

    @property
    def goal_region(self) -> GoalRegion:
        return GoalRegion(self.goal, self.radius)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "workspace_id": self.workspace_id,
            "split": self.split,
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "radius": self.radius,
            "reference_cost": self.reference_cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Problem":
        return cls(
            d["id"], d["workspace_id"], d["split"], np.array(d["start"]), np.array(d["goal"]),
            float(d["radius"]), d.get("reference_cost"),
        )


def sample_free_state(w: Workspace, rng: np.random.Generator, body: RigidBody | None = None, tries: int = 10000):
    lo, hi = w.state_bounds()
    for _ in range(tries):
        x = lo + rng.random(len(lo)) * (hi - lo)
        if w.is_rigid:
            x[2] = wrap_angle(x[2])
        if point_in_free_space(x, w, body):
            return x
    raise GenerationError(f"could not sample a free state in {w.id}")


def sample_query(w: Workspace, rng, body=None, min_separation: float = 0.25):
    """Free start/goal pair at least ``min_separation`` of the diagonal apart (positions)."""
    need = min_separation * float(np.linalg.norm(w.extent))
    start = sample_free_state(w, rng, body)
    for _ in range(1000):
        goal = sample_free_state(w, rng, body)
        if np.linalg.norm(goal[: w.dim] - start[: w.dim]) >= need:
            return start, goal
    raise GenerationError(f"no goal far enough from {start} in {w.id}")


def expert_config(cfg: PipelineConfig, seed: int) -> RrtConfig:
    d = cfg.data
    return RrtConfig(
        max_iters=d.expert_iters, eta=d.eta, goal_bias=d.goal_bias, gamma=d.gamma, seed=seed,
        step=cfg.plan.plan_step, strict_step=cfg.plan.strict_step, snap_to_center=True,
    )


def gen_expert_paths(
    w: Workspace,
    count: int,
    rrt_cfg: RrtConfig,
    seed: int,
    body: RigidBody | None = None,
    goal_radius: float = 1.0,
    min_separation: float = 0.25,
    retry_factor: int = 5,
    strict_step: float | None = None,
) -> list[ExpertPath]:
    """``count`` RRT* demonstrations, each shortened by lazy state contraction.

    Stored paths start at the sampled start and end at the goal center.
    """
    rng = np.random.default_rng(seed)
    strict = strict_step if strict_step is not None else rrt_cfg.strict_step
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > retry_factor * count + 10:
            raise GenerationError(
                f"only {len(out)} of {count} expert paths solved in {w.id} after {attempts - 1} queries"
            )
        start, goal = sample_query(w, rng, body, min_separation)
        found = rrtstar_plan(
            w, start, GoalRegion(goal, goal_radius), rrt_cfg.with_seed(int(rng.integers(2**31))), body
        )
        if found is None:
            continue
        raw, raw_cost = found
        short = lazy_states_contraction(raw, w, strict, body)
        if not path_feasible(short, w, strict, body):
            continue
        out.append(ExpertPath(start, goal, short, float(raw_cost), path_cost(short, w.is_rigid)))
    return out


def gen_problems(
    w: Workspace,
    count: int,
    split: str,
    cfg: PipelineConfig,
    seed: int,
    first_id: int = 0,
) -> list[Problem]:
    """Test queries whose solvability is confirmed by a first-solution RRT* run."""
    rng = np.random.default_rng(seed)
    body = cfg.body()
    check = RrtConfig(
        max_iters=cfg.plan.fallback_iters, eta=cfg.data.eta, goal_bias=cfg.data.goal_bias,
        gamma=cfg.data.gamma, step=cfg.plan.plan_step, strict_step=cfg.plan.strict_step,
        stop_on_first=True, snap_to_center=True,
    )
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > cfg.data.retry_factor * count + 10:
            raise GenerationError(f"could not confirm {count} solvable problems in {w.id}")
        start, goal = sample_query(w, rng, body, cfg.data.min_separation)
        found = rrtstar_plan(w, start, GoalRegion(goal, cfg.data.goal_radius), check.with_seed(int(rng.integers(2**31))), body)
        if found is None:
            continue
        pid = f"{split}-{first_id + len(out):04d}"
        out.append(Problem(pid, w.id, split, start, goal, cfg.data.goal_radius, float(found[1])))
    return out


def gen_data(cfg: PipelineConfig, out_dir) -> dict:
    """Generate workspaces, clouds, expert paths and test problems under ``out_dir/data``.

    Returns the dataset manifest (also written to ``data/manifest.json``).
    """
    root = FsPath(out_dir) / "data"
    master = cfg.seed
    spec = cfg.workspace
    spec_seeded = type(spec)(**{**spec.__dict__, "seed": derive_seed(master, "workspaces", spec.seed)})
    layouts = gen_workspaces(spec_seeded, cfg.data.cae_extra_workspaces)
    body = cfg.body()
    entries = []
    all_paths: dict[str, list[ExpertPath]] = {}
    seen_problems: list[Problem] = []
    unseen_problems: list[Problem] = []
    n_seen = len(layouts["seen"])
    per_ws = [cfg.data.seen_problems // n_seen + (1 if i < cfg.data.seen_problems % n_seen else 0) for i in range(n_seen)]
    for split in ("seen", "unseen", "cae"):
        for i, w in enumerate(layouts[split]):
            entry = {"id": w.id, "split": split}
            entry["file"] = f"workspaces/{w.id}.json"
            entry["sha256"] = write_json(root / entry["file"], w.to_dict())
            cloud = sample_obstacle_cloud(w, cfg.data.n_pc, derive_seed(master, "cloud", w.id))
            entry["cloud"] = f"clouds/{w.id}.json"
            entry["cloud_sha256"] = write_json(root / entry["cloud"], cloud.to_dict())
            if split == "seen":
                log.info("expert paths for %s", w.id)
                paths = gen_expert_paths(
                    w, cfg.data.paths_per_workspace, expert_config(cfg, 0),
                    derive_seed(master, "expert", w.id), body, cfg.data.goal_radius,
                    cfg.data.min_separation, cfg.data.retry_factor, cfg.plan.strict_step,
                )
                all_paths[w.id] = paths
                entry["n_paths"] = len(paths)
                entry["paths"] = f"paths/{w.id}.json"
                entry["paths_sha256"] = write_json(
                    root / entry["paths"], {"workspace_id": w.id, "paths": [p.to_dict() for p in paths]}
                )
                seen_problems += gen_problems(
                    w, per_ws[i], "seen", cfg, derive_seed(master, "problems", w.id), len(seen_problems)
                )
            elif split == "unseen":
                unseen_problems += gen_problems(
                    w, cfg.data.problems_per_unseen, "unseen", cfg,
                    derive_seed(master, "problems", w.id), len(unseen_problems),
                )
            entries.append(entry)
    raw = [p.raw_cost for ps in all_paths.values() for p in ps]
    short = [p.cost for ps in all_paths.values() for p in ps]
    steps = [
        float(np.mean([np.linalg.norm(b - a) for a, b in zip(p.states[:-1], p.states[1:])]))
        for ps in all_paths.values() for p in ps if len(p.states) > 1
    ]
    manifest = {
        "kind": cfg.kind,
        "master_seed": master,
        "config": cfg.to_dict(),
        "workspaces": entries,
        "problems": {
            "seen": {"file": "problems_seen.json", "count": len(seen_problems),
                     "sha256": write_json(root / "problems_seen.json", [p.to_dict() for p in seen_problems])},
            "unseen": {"file": "problems_unseen.json", "count": len(unseen_problems),
                       "sha256": write_json(root / "problems_unseen.json", [p.to_dict() for p in unseen_problems])},
        },
        "expert": {
            "planner": "RRT* (best solution within budget) followed by lazy state contraction",
            "lsc_applied": True,
            "mean_raw_cost": float(np.mean(raw)) if raw else None,
            "mean_cost": float(np.mean(short)) if short else None,
            "mean_waypoint_spacing": float(np.mean(steps)) if steps else None,
            "mean_waypoints": float(np.mean([len(p.states) for ps in all_paths.values() for p in ps])) if raw else None,
        },
    }
    check_disjoint(manifest)
    write_json(root / "manifest.json", manifest)
    return manifest


def check_disjoint(manifest: dict) -> None:
    seen = {e["id"] for e in manifest["workspaces"] if e["split"] != "unseen"}
    unseen = {e["id"] for e in manifest["workspaces"] if e["split"] == "unseen"}
    if seen & unseen:
        raise ValueError(f"workspace ids in both training and unseen sets: {sorted(seen & unseen)}")


class DataError(RuntimeError):
    pass


def verify_manifest(out_dir) -> dict:
    """Load ``data/manifest.json`` and check every referenced file's hash."""
    root = FsPath(out_dir) / "data"
    manifest = json.loads((root / "manifest.json").read_text())
    refs = []
    for e in manifest["workspaces"]:
        refs.append((e["file"], e["sha256"]))
        refs.append((e["cloud"], e["cloud_sha256"]))
        if "paths" in e:
            refs.append((e["paths"], e["paths_sha256"]))
    for p in manifest["problems"].values():
        refs.append((p["file"], p["sha256"]))
    for name, digest in refs:
        path = root / name
        if not path.exists():
            raise DataError(f"missing dataset file {path}")
        if sha256_file(path) != digest:
            raise DataError(f"hash mismatch for {path}")
    check_disjoint(manifest)
    return manifest


def dataset_fingerprint(out_dir) -> str:
    return sha256_file(FsPath(out_dir) / "data" / "manifest.json")


@dataclass
class DataBundle:
    manifest: dict
    workspaces: dict[str, Workspace]
    clouds: dict[str, PointCloud]
    paths: dict[str, list[ExpertPath]]
    problems: dict[str, list[Problem]]
    fingerprint: str

    def ids(self, split: str) -> list[str]:
        return [e["id"] for e in self.manifest["workspaces"] if e["split"] == split]


def load_data(out_dir) -> DataBundle:
    root = FsPath(out_dir) / "data"
    manifest = verify_manifest(out_dir)
    ws, clouds, paths = {}, {}, {}
    for e in manifest["workspaces"]:
        ws[e["id"]] = Workspace.load(root / e["file"])
        clouds[e["id"]] = PointCloud.load(root / e["cloud"])
        if "paths" in e:
            doc = json.loads((root / e["paths"]).read_text())
            paths[e["id"]] = [ExpertPath.from_dict(p) for p in doc["paths"]]
    problems = {
        split: [Problem.from_dict(p) for p in json.loads((root / info["file"]).read_text())]
        for split, info in manifest["problems"].items()
    }
    return DataBundle(manifest, ws, clouds, paths, problems, dataset_fingerprint(out_dir))
