"""Command-line runner.

    python -m bedroil [--config FILE] [--out DIR] COMMAND [options]

Every command writes into ``DIR/<command>-<hash>/``, where the hash covers
the command, its options and the fully resolved configuration, and leaves a
``run_metadata.json`` there from which the run can be replayed with
``python -m bedroil rerun PATH``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dataset import DatasetError, load_dataset, save_dataset
from .experiment import (
    ALGOS,
    ConfigError,
    build_dataset,
    build_problem,
    build_world,
    canonical_json,
    checkpoint_dict,
    config_hash,
    load_config,
    policy_from_checkpoint,
    resolve_config,
    run_sweep,
    solver_config,
    sweep_for,
    train,
)
from .mdp import MdpError, save_mdp
from .oracle import SUITES, run_suite
from .perturb import SWEEP_PARAMS, evaluate_under_shift, records_to_csv
from .solver import TrainingDivergedError

METADATA = "run_metadata.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    """Fold command-line overrides into the config before hashing."""
    override = json.loads(canonical_json(cfg))
    if getattr(args, "rho", None) is not None:
        override["solver"]["rho"] = args.rho
    if getattr(args, "seed", None) is not None:
        if args.command == "verify":
            override["verify"]["seed"] = args.seed
        else:
            override["dataset"]["seed"] = args.seed
            override["solver"]["seed"] = args.seed
    if args.command == "sweep" and args.algo is not None:
        override["sweep"]["algo"] = args.algo
    if getattr(args, "param", None) is not None:
        override["sweep"]["param"] = args.param
    if getattr(args, "values", None) is not None:
        override["sweep"]["values"] = args.values
    if getattr(args, "suite", None) is not None:
        override["verify"]["suites"] = args.suite
    if getattr(args, "quick", False):
        override["verify"]["quick"] = True
    return resolve_config(override)


def _command_key(args: argparse.Namespace) -> dict:
    """Options that change a command's outputs beyond the config itself."""
    key = {"command": args.command}
    for name in ("algo", "data", "checkpoint"):
        value = getattr(args, name, None)
        if value is not None:
            key[name] = str(value)
    return key


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------- commands

def cmd_gen_env(args, cfg, run_dir: Path) -> int:
    world, expert = build_world(cfg)
    save_mdp(world.mdp, run_dir / "mdp.json")
    _write_json(run_dir / "expert.json", {"probs": expert.tolist()})
    _write_json(run_dir / "env.json", {"spec": world.spec.to_dict(), "cells": [list(c) for c in world.cells],
                                       "reward": world.reward.tolist()})
    print(f"wrote {run_dir / 'mdp.json'}")
    return 0


def cmd_gen_data(args, cfg, run_dir: Path) -> int:
    world, expert = build_world(cfg)
    dataset = build_dataset(cfg, world, expert)
    save_dataset(dataset, run_dir / "trajectories.jsonl")
    print(f"wrote {len(dataset)} trajectories ({len(dataset.transitions)} transitions)")
    return 0


def cmd_train(args, cfg, run_dir: Path) -> int:
    world, expert = build_world(cfg)
    if args.data is not None:
        dataset = load_dataset(args.data, world.mdp.num_states, world.mdp.num_actions)
    else:
        dataset = build_dataset(cfg, world, expert)
    problem = build_problem(cfg, dataset, world, expert)
    result = train(problem, solver_config(cfg), args.algo)
    ckpt = run_dir / "checkpoint.json"
    _write_json(ckpt, checkpoint_dict(result, result.config.steps))
    (run_dir / "history.csv").write_text(result.history.to_csv())
    if any(result.history.warnings.values()):
        print(f"warnings: {result.history.warnings}", file=sys.stderr)
    print(f"checkpoint sha256 {_file_digest(ckpt)}")
    return 0


def cmd_eval(args, cfg, run_dir: Path) -> int:
    try:
        data = json.loads(Path(args.checkpoint).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.checkpoint}: invalid JSON ({exc.msg})") from None
    policy = policy_from_checkpoint(data)
    world, expert = build_world(cfg)
    if policy.logits.shape != expert.shape:
        raise ConfigError(f"checkpoint policy shape {policy.logits.shape} does not match env {expert.shape}")
    records = evaluate_under_shift(policy, world.spec, sweep_for(cfg, cfg["dataset"]["seed"]), expert)
    (run_dir / "sweep.csv").write_text(records_to_csv(records))
    print(f"wrote {len(records)} rows")
    return 0


def cmd_sweep(args, cfg, run_dir: Path) -> int:
    records = run_sweep(cfg)
    (run_dir / "sweep.csv").write_text(records_to_csv(records))
    print(f"wrote {len(records)} rows")
    return 0


def cmd_verify(args, cfg, run_dir: Path) -> int:
    vcfg = cfg["verify"]
    names = SUITES if vcfg["suites"] == "all" else tuple(vcfg["suites"].split(","))
    unknown = set(names) - set(SUITES)
    if unknown:
        raise ConfigError(f"unknown suites {sorted(unknown)}; choose from {SUITES} or 'all'")
    failed = 0
    for name in names:
        report = run_suite(name, vcfg["seed"], quick=vcfg["quick"])
        _write_json(run_dir / f"verify_{name}.json", report.to_dict())
        status = "pass" if report.passed else "FAIL"
        print(f"{name}: {status} ({report.cases} cases, max violation {report.max_violation:.3g})")
        failed += not report.passed
    return 1 if failed else 0


COMMANDS = {
    "gen-env": cmd_gen_env,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bedroil", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON config (sections env, dataset, solver, sweep, verify)")
    parser.add_argument("--out", type=Path, default=Path("runs"), help="root directory for run outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-env", help="write the nominal MDP and expert policy")
    p = sub.add_parser("gen-data", help="write expert trajectories (JSON lines)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a policy; writes checkpoint.json and history.csv")
    p.add_argument("--algo", choices=ALGOS, default="bedroil")
    p.add_argument("--rho", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", type=Path, help="trajectory file (default: generate from config)")

    p = sub.add_parser("eval", help="evaluate a checkpoint under the configured sweep")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--param", choices=SWEEP_PARAMS)
    p.add_argument("--values", type=_floats)

    p = sub.add_parser("sweep", help="train per seed and evaluate under a kernel shift sweep")
    p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--rho", type=float)
    p.add_argument("--param", choices=SWEEP_PARAMS)
    p.add_argument("--values", type=_floats)

    p = sub.add_parser("verify", help="run the oracle suites; nonzero exit on any failure")
    p.add_argument("--suite", default=None, help=f"'all' or comma-separated from {', '.join(SUITES)}")
    p.add_argument("--seed", type=int)
    p.add_argument("--quick", action="store_true", help="smaller sample counts")

    p = sub.add_parser("rerun", help="replay a run from its run_metadata.json")
    p.add_argument("metadata", type=Path)
    return parser


def _execute(args: argparse.Namespace, cfg: dict, out_root: Path) -> int:
    key = _command_key(args)
    digest = config_hash({"key": key, "config": cfg})
    run_dir = out_root / f"{args.command}-{digest}"
    run_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "command": key,
        "argv": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()},
        "config": cfg,
        "config_hash": digest,
        "seed": cfg["verify"]["seed"] if args.command == "verify" else cfg["solver"]["seed"],
        "versions": {
            "bedroil": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "started_at": _now(),
    }
    code = COMMANDS[args.command](args, cfg, run_dir)
    meta["finished_at"] = _now()
    meta["exit_code"] = code
    _write_json(run_dir / METADATA, meta)
    print(f"run directory {run_dir}")
    return code


def _replay_args(meta_path: Path) -> tuple[argparse.Namespace, dict]:
    meta = json.loads(meta_path.read_text())
    argv = dict(meta["argv"])
    for name in ("data", "checkpoint", "config", "out"):
        if argv.get(name) is not None:
            argv[name] = Path(argv[name])
    return argparse.Namespace(**argv), resolve_config(meta["config"])


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            replay, cfg = _replay_args(args.metadata)
            return _execute(replay, cfg, args.out)
        cfg = load_config(args.config) if args.config else resolve_config()
        cfg = _apply_overrides(cfg, args)
        return _execute(args, cfg, args.out)
    except (ConfigError, DatasetError, MdpError, FileNotFoundError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
