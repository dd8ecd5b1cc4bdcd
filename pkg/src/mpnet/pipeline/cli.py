"""Command line entry point: ``mpnet <subcommand> [--seed N] [--config FILE] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path as FsPath

import numpy as np

from ..planner import mpnet_plan
from ..rrtstar import rrtstar_plan
from .bench import baseline_config, bench_stage, mpnet_config
from .config import load_config
from .dataset import Problem, gen_data, load_data, sha256_file, write_json
from .render import render_svg
from .training import _read_model_manifest, load_models, train_cae_stage, train_pnet_stage

log = logging.getLogger("mpnet")


def update_index(out: FsPath, stage: str, files: list[FsPath]) -> None:
    """Record a stage's outputs (relative paths and hashes) in ``index.json``."""
    path = out / "index.json"
    index = json.loads(path.read_text()) if path.exists() else {}
    index[stage] = {str(f.relative_to(out)): sha256_file(f) for f in sorted(files)}
    write_json(path, index)


def _cfg(args):
    # later stages reuse the configuration saved by gen-data
    path = args.config
    if path is None and (FsPath(args.out) / "config.json").exists():
        path = FsPath(args.out) / "config.json"
    return load_config(path, args.kind, args.seed)


def cmd_gen_data(args) -> int:
    cfg = _cfg(args)
    out = FsPath(args.out)
    man = gen_data(cfg, out)
    write_json(out / "config.json", cfg.to_dict())
    update_index(out, "gen-data", [out / "data" / "manifest.json", out / "config.json"])
    counts = {s: sum(1 for e in man["workspaces"] if e["split"] == s) for s in ("seen", "unseen", "cae")}
    print(json.dumps({"workspaces": counts, "problems": {k: v["count"] for k, v in man["problems"].items()}}))
    return 0


def cmd_train_cae(args) -> int:
    cfg = _cfg(args)
    out = FsPath(args.out)
    man = train_cae_stage(cfg, out)
    update_index(out, "train-cae", [out / "models" / "manifest.json"])
    h = man["encoder"]["history"]["train"]
    print(json.dumps({"initial_loss": h[0], "final_loss": h[-1]}))
    return 0


def cmd_train_pnet(args) -> int:
    cfg = _cfg(args)
    out = FsPath(args.out)
    man = train_pnet_stage(cfg, out)
    update_index(out, "train-pnet", [out / "models" / "manifest.json"])
    h = man["pnet"]["history"]
    print(json.dumps({"initial_loss": h["train"][0], "final_loss": h["train"][-1],
                      "final_val_loss": h["val"][-1] if h["val"] else None}))
    return 0


def _problem(args, data) -> Problem:
    if args.problem:
        for ps in data.problems.values():
            for p in ps:
                if p.id == args.problem:
                    return p
        raise SystemExit(f"unknown problem id {args.problem!r}")
    if not (args.workspace and args.start and args.goal):
        raise SystemExit("give --problem, or --workspace with --start and --goal")
    return Problem("query", args.workspace, "adhoc", np.array(args.start, float), np.array(args.goal, float), args.radius)


def cmd_plan(args) -> int:
    cfg = _cfg(args)
    out = FsPath(args.out)
    data = load_data(out)
    models = load_models(out, data.fingerprint)
    p = _problem(args, data)
    w = data.workspaces[p.workspace_id]
    mcfg = mpnet_config(cfg, args.mode)
    res = mpnet_plan(w, data.clouds[p.workspace_id], p.start, p.goal_region, models, mcfg,
                     np.random.default_rng(cfg.seed), cfg.body())
    doc = {"problem": p.to_dict(), "mode": args.mode, **res.to_dict()}
    print(json.dumps(doc))
    if args.svg:
        paths = [(res.path, "red")] if res.path else []
        render_svg(w, paths, args.svg, p.start, p.goal, p.radius)
    return 0 if res.succeeded else 1


def cmd_bench(args) -> int:
    cfg = _cfg(args)
    out = FsPath(args.out)
    data = load_data(out)
    man = _read_model_manifest(out)
    models = load_models(out)
    report = bench_stage(cfg, out, data, models, man.get("dataset_fingerprint", ""))
    update_index(out, "bench", [out / "bench" / "report.json", out / "bench" / "report.csv"])
    print(json.dumps({"summary": report.summary, "speedup": report.speedup}, indent=1))
    return 0


def cmd_render(args) -> int:
    cfg = _cfg(args)
    out = FsPath(args.out)
    data = load_data(out)
    target = FsPath(args.svg or out / "render" / f"{args.problem or args.workspace}.svg")
    if not args.problem:
        render_svg(data.workspaces[args.workspace], [], target)
        print(target)
        return 0
    p = _problem(args, data)
    w = data.workspaces[p.workspace_id]
    paths = []
    rng = np.random.default_rng(cfg.seed)
    try:
        models = load_models(out, data.fingerprint)
    except FileNotFoundError:
        models = None
    if models is not None:
        res = mpnet_plan(w, data.clouds[p.workspace_id], p.start, p.goal_region, models,
                         mpnet_config(cfg, args.mode), rng, cfg.body())
        if res.path:
            paths.append((res.path, "red"))
    found = rrtstar_plan(w, p.start, p.goal_region, baseline_config(cfg).with_seed(cfg.seed), cfg.body())
    if found is not None:
        paths.append((found[0], "blue"))
    render_svg(w, paths, target, p.start, p.goal, p.radius)
    print(target)
    return 0


def _common(suppress: bool) -> argparse.ArgumentParser:
    # the flags are accepted before or after the subcommand; the subcommand
    # copies suppress their defaults so they never clobber a global value
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(None), help="master seed")
    p.add_argument("--config", default=d(None), help="JSON configuration overrides")
    p.add_argument("--out", default=d("out"), help="artifact directory")
    p.add_argument("--kind", default=d(None), help="simple2d, complex2d, complex3d or rigid2d")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    ap = argparse.ArgumentParser(prog="mpnet", description="Neural motion planning pipeline", parents=[_common(False)])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common]).set_defaults(fn=cmd_gen_data)
    sub.add_parser("train-cae", parents=[common]).set_defaults(fn=cmd_train_cae)
    sub.add_parser("train-pnet", parents=[common]).set_defaults(fn=cmd_train_pnet)
    sub.add_parser("bench", parents=[common]).set_defaults(fn=cmd_bench)
    for name, fn in (("plan", cmd_plan), ("render", cmd_render)):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--problem", default=None, help="problem id from the dataset")
        sp.add_argument("--workspace", default=None)
        sp.add_argument("--start", type=float, nargs="+")
        sp.add_argument("--goal", type=float, nargs="+")
        sp.add_argument("--radius", type=float, default=1.0)
        sp.add_argument("--mode", choices=("NR", "HR"), default="HR")
        sp.add_argument("--svg", default=None, help="write an SVG drawing here")
        sp.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
