"""Benchmark harness: identical problem lists for every planner, matched seeds."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Callable

import numpy as np

from ..geometry import path_cost, path_feasible
from ..planner import MpnetConfig, MpnetModels, mpnet_plan
from ..rrtstar import RrtConfig, rrtstar_plan
from .config import PipelineConfig, derive_seed
from .dataset import DataBundle, Problem, write_json
from .training import FingerprintMismatch, latents_for

# planner(problem, seed) -> (path or None, wall time in microseconds)
PlannerFn = Callable[[Problem, int], tuple]

TIMING_NOTE = (
    "times are wall-clock microseconds of the planning call only; model loading "
    "and point-cloud encoding are excluded (encoding is listed per workspace)"
)


@dataclass
class Row:
    problem_id: str
    split: str
    planner: str
    seed: int
    success: bool
    time_us: int
    cost: float | None
    valid: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BenchReport:
    dataset_fingerprint: str
    planners: list[str]
    seeds: list[int]
    rows: list[Row]
    summary: dict = field(default_factory=dict)
    speedup: dict = field(default_factory=dict)
    encode_time_us: dict = field(default_factory=dict)
    note: str = TIMING_NOTE

    def to_dict(self) -> dict:
        return {
            "dataset_fingerprint": self.dataset_fingerprint,
            "planners": self.planners,
            "seeds": self.seeds,
            "note": self.note,
            "summary": self.summary,
            "speedup": self.speedup,
            "encode_time_us": self.encode_time_us,
            "rows": [r.to_dict() for r in self.rows],
        }

    def save(self, out_dir, stem: str = "report") -> tuple[FsPath, FsPath]:
        out_dir = FsPath(out_dir)
        js = out_dir / f"{stem}.json"
        write_json(js, self.to_dict())
        cs = out_dir / f"{stem}.csv"
        with open(cs, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["problem_id", "planner", "success", "time_us", "cost"])
            for r in self.rows:
                wr.writerow([r.problem_id, r.planner, int(r.success), r.time_us, "" if r.cost is None else repr(r.cost)])
        return js, cs


def _stats(values) -> dict:
    if not values:
        return {"mean": None, "std": None, "median": None}
    a = np.asarray(values, dtype=float)
    return {"mean": float(a.mean()), "std": float(a.std()), "median": float(np.median(a))}


def summarize(rows: list[Row], planners: list[str]) -> tuple[dict, dict]:
    """Per split and planner: success rate, time statistics over successes, mean cost.

    Speedups compare the RRT* baseline against MPNet-NR, both over all their
    successes and paired over the (problem, seed) runs both solved.
    """
    summary: dict = {}
    speedup: dict = {}
    for split in sorted({r.split for r in rows}):
        summary[split] = {}
        by = {}
        for name in planners:
            rs = [r for r in rows if r.split == split and r.planner == name]
            ok = [r for r in rs if r.success]
            t = _stats([r.time_us for r in ok])
            summary[split][name] = {
                "runs": len(rs),
                "success_rate": len(ok) / len(rs) if rs else 0.0,
                "mean_time_us": t["mean"],
                "std_time_us": t["std"],
                "median_time_us": t["median"],
                "mean_cost": float(np.mean([r.cost for r in ok])) if ok else None,
            }
            by[name] = {(r.problem_id, r.seed): r for r in ok}
        if "RRT*" in by and "MPNet-NR" in by:
            base, nr = summary[split]["RRT*"], summary[split]["MPNet-NR"]
            both = sorted(set(by["RRT*"]) & set(by["MPNet-NR"]))
            pb = [by["RRT*"][k].time_us for k in both]
            pn = [by["MPNet-NR"][k].time_us for k in both]
            speedup[split] = {
                "mean_ratio": _ratio(base["mean_time_us"], nr["mean_time_us"]),
                "median_ratio": _ratio(base["median_time_us"], nr["median_time_us"]),
                "paired_runs": len(both),
                "paired_median_rrt_us": float(np.median(pb)) if both else None,
                "paired_median_nr_us": float(np.median(pn)) if both else None,
                "paired_median_ratio": _ratio(np.median(pb), np.median(pn)) if both else None,
            }
    return summary, speedup


def _ratio(a, b):
    if a is None or b is None or b <= 0:
        return None
    return float(a) / float(b)


def run_benchmark(
    problems: list[Problem],
    planners: dict[str, PlannerFn],
    seeds=(0,),
    workers: int = 1,
    validate: Callable[[Problem, list], bool] | None = None,
    fingerprint: str = "",
) -> BenchReport:
    """Run every planner on every problem under every seed.

    Each (problem, seed) pair gets one derived seed shared by all planners.
    Rows are sorted by problem id, planner and seed so the report does not
    depend on execution order.
    """
    names = list(planners)
    jobs = [(p, s, n) for p in problems for s in seeds for n in names]

    def run(job):
        p, s, name = job
        sub = derive_seed(s, p.id)
        path, t_us = planners[name](p, sub)
        ok = path is not None
        cost = None
        if ok:
            cost = path_cost(path, len(p.start) == 3)
        valid = bool(validate(p, path)) if ok and validate is not None else ok
        return Row(p.id, p.split, name, int(s), ok, int(t_us), cost, valid)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    order = {n: i for i, n in enumerate(names)}
    rows.sort(key=lambda r: (r.problem_id, order[r.planner], r.seed))
    summary, speedup = summarize(rows, names)
    return BenchReport(fingerprint, names, [int(s) for s in seeds], rows, summary, speedup)


def mpnet_config(cfg: PipelineConfig, mode: str) -> MpnetConfig:
    p, d = cfg.plan, cfg.data
    hybrid = RrtConfig(
        max_iters=p.fallback_iters, eta=d.eta, gamma=d.gamma, goal_bias=d.goal_bias,
        step=p.plan_step, strict_step=p.strict_step, stop_on_first=True, snap_to_center=True,
    )
    return MpnetConfig(
        bidir_iters=p.bidir_iters, replan_depth=p.replan_depth, mode=mode, plan_step=p.plan_step,
        strict_step=p.strict_step, stochastic=p.stochastic, hybrid=hybrid, hybrid_region=p.hybrid_region,
    )


def baseline_config(cfg: PipelineConfig) -> RrtConfig:
    p, d = cfg.plan, cfg.data
    return RrtConfig(
        max_iters=p.baseline_iters, eta=d.eta, gamma=d.gamma, goal_bias=d.goal_bias,
        step=p.plan_step, strict_step=p.strict_step, stop_on_first=p.baseline_first_solution,
    )


def standard_planners(cfg: PipelineConfig, data: DataBundle, models: MpnetModels) -> tuple[dict, dict]:
    """MPNet-NR, MPNet-HR and the RRT* baseline as benchmark callables.

    Returns (planners, per-workspace encoding time in microseconds).
    """
    body = cfg.body()
    ids = sorted({p.workspace_id for ps in data.problems.values() for p in ps})
    enc_us = {}
    latents = {}
    for i in ids:
        t0 = time.perf_counter_ns()
        latents[i] = latents_for(models, data, [i])[i]
        enc_us[i] = (time.perf_counter_ns() - t0) // 1000

    def neural(mode):
        mcfg = mpnet_config(cfg, mode)

        def fn(p: Problem, seed: int):
            res = mpnet_plan(
                data.workspaces[p.workspace_id], None, p.start, p.goal_region, models,
                replace(mcfg, seed=seed), np.random.default_rng(seed), body, latents[p.workspace_id],
            )
            return res.path, res.time_us

        return fn

    base = baseline_config(cfg)

    def rrt(p: Problem, seed: int):
        t0 = time.perf_counter_ns()
        found = rrtstar_plan(data.workspaces[p.workspace_id], p.start, p.goal_region, base.with_seed(seed), body)
        t_us = (time.perf_counter_ns() - t0) // 1000
        return (None if found is None else found[0]), t_us

    return {"MPNet-NR": neural("NR"), "MPNet-HR": neural("HR"), "RRT*": rrt}, enc_us


def path_validator(cfg: PipelineConfig, data: DataBundle):
    """Strict feasibility plus endpoint contract for benchmark rows."""
    body = cfg.body()

    def check(p: Problem, path) -> bool:
        w = data.workspaces[p.workspace_id]
        return (
            np.array_equal(np.asarray(path[0]), p.start)
            and p.goal_region.contains(path[-1], w.is_rigid)
            and path_feasible(path, w, cfg.plan.strict_step, body)
        )

    return check


def bench_stage(cfg: PipelineConfig, out_dir, data: DataBundle, models: MpnetModels, model_fingerprint: str) -> BenchReport:
    if model_fingerprint != data.fingerprint:
        raise FingerprintMismatch("models do not match the dataset; refusing to benchmark")
    planners, enc_us = standard_planners(cfg, data, models)
    problems = data.problems["seen"] + data.problems["unseen"]
    report = run_benchmark(
        problems, planners, cfg.bench_seeds, cfg.workers, path_validator(cfg, data), data.fingerprint
    )
    report.encode_time_us = enc_us
    report.save(FsPath(out_dir) / "bench")
    return report


def deterministic_view(report: dict) -> dict:
    """Report with every wall-time derived field removed."""
    drop = ("time", "speedup", "ratio", "_us")

    def strip(x):
        if isinstance(x, dict):
            return {k: strip(v) for k, v in x.items() if not any(d in k for d in drop)}
        if isinstance(x, list):
            return [strip(v) for v in x]
        if isinstance(x, float) and math.isnan(x):
            return None
        return x

    return strip(report)
