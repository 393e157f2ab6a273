"""Configuration schema and the end-to-end experiment pipeline.

A configuration is a JSON object with the sections ``env``, ``dataset``,
``solver``, ``sweep`` and ``verify``. Missing keys take the defaults in
:data:`DEFAULT_CONFIG` (the gridworld robustness experiment); unknown keys
are errors.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .baselines import run_baseline
from .dataset import Dataset, generate_dataset
from .perturb import (
    Gridworld,
    GridworldSpec,
    PerturbationSweep,
    acceptance_gridworld,
    build_gridworld,
    evaluate_under_shift,
    make_expert,
)
from .mdp import SoftmaxPolicy
from .robust import DualState, Problem
from .solver import SolverConfig, TrainingHistory, train_bedroil

ALGOS = ("bedroil", "bc", "bedroil_rho0")


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "env": {**acceptance_gridworld().to_dict(), "expert_temperature": 0.1},
    "dataset": {"num_trajectories": 100, "horizon": 20, "seed": 0, "expert_known": False},
    "solver": SolverConfig(
        rho=0.1, generator="soft_tv", lr_dual=0.5, lr_policy=0.5, steps=2000,
        tau_init=5.0, loss_mode="sample_nll", log_every=10,
    ).to_dict(),
    "sweep": {
        "param": "slip_prob", "values": [0.0, 0.1, 0.2, 0.3], "seeds": [0, 1, 2, 3, 4],
        "samples_per_value": 1, "rollouts": 100, "horizon": None, "algo": "bedroil",
    },
    "verify": {"suites": "all", "seed": 7, "quick": False},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(override: dict | None = None) -> dict:
    """Defaults overlaid with ``override``; every section is validated."""
    cfg = _merge(DEFAULT_CONFIG, override or {})
    try:
        env_spec(cfg)
        solver_config(cfg)
        sweep_for(cfg, seed=0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    ds = cfg["dataset"]
    if ds["num_trajectories"] < 1 or ds["horizon"] < 1:
        raise ConfigError("dataset sizes must be positive")
    if cfg["sweep"]["algo"] not in ALGOS:
        raise ConfigError(f"unknown algo {cfg['sweep']['algo']!r}")
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return resolve_config(data)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def env_spec(cfg: dict) -> GridworldSpec:
    env = dict(cfg["env"])
    env.pop("expert_temperature")
    return GridworldSpec.from_dict(env)


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig.from_dict(cfg["solver"])


def sweep_for(cfg: dict, seed: int) -> PerturbationSweep:
    sw = cfg["sweep"]
    return PerturbationSweep(
        sw["param"], tuple(sw["values"]), sw["samples_per_value"], seed, sw["rollouts"], sw["horizon"],
    )


def build_world(cfg: dict) -> tuple[Gridworld, np.ndarray]:
    """The nominal gridworld and its expert policy."""
    world = build_gridworld(env_spec(cfg))
    return world, make_expert(world, cfg["env"]["expert_temperature"])


def build_dataset(cfg: dict, world: Gridworld, expert: np.ndarray, seed: int | None = None) -> Dataset:
    ds = cfg["dataset"]
    seed = ds["seed"] if seed is None else seed
    return generate_dataset(world.mdp, expert, ds["num_trajectories"], ds["horizon"], seed)


def build_problem(cfg: dict, dataset: Dataset, world: Gridworld, expert: np.ndarray) -> Problem:
    known = expert if cfg["dataset"]["expert_known"] else None
    return Problem.from_dataset(dataset, world.mdp.discount, known, cfg["solver"]["loss_mode"])


@dataclass(frozen=True)
class TrainResult:
    algo: str
    policy: SoftmaxPolicy
    dual: DualState | None
    history: TrainingHistory
    config: SolverConfig


def train(problem: Problem, config: SolverConfig, algo: str) -> TrainResult:
    if algo == "bedroil":
        policy, dual, history = train_bedroil(problem, config)
        return TrainResult(algo, policy, dual, history, config)
    if algo in ALGOS:
        policy, history = run_baseline(algo, problem, config)
        return TrainResult(algo, policy, None, history, config)
    raise ValueError(f"unknown algo {algo!r}; choose from {ALGOS}")


def train_seed(cfg: dict, algo: str, seed: int, world=None, expert=None) -> TrainResult:
    """Generate the dataset for ``seed`` and train ``algo`` with solver seed ``seed``."""
    if world is None:
        world, expert = build_world(cfg)
    dataset = build_dataset(cfg, world, expert, seed)
    problem = build_problem(cfg, dataset, world, expert)
    return train(problem, replace(solver_config(cfg), seed=seed), algo)


def run_sweep(cfg: dict, algo: str | None = None) -> list[dict]:
    """Train one policy per sweep seed and evaluate each under the sweep."""
    algo = algo or cfg["sweep"]["algo"]
    world, expert = build_world(cfg)
    records = []
    for seed in cfg["sweep"]["seeds"]:
        result = train_seed(cfg, algo, seed, world, expert)
        records += evaluate_under_shift(
            result.policy, world.spec, sweep_for(cfg, seed), expert,
        )
    return records


def checkpoint_dict(result: TrainResult, iteration: int) -> dict:
    return {
        "algo": result.algo,
        "iteration": iteration,
        "logits": result.policy.logits.tolist(),
        "q_table": None if result.dual is None else result.dual.q_table.tolist(),
        "tau": None if result.dual is None else result.dual.tau,
        "solver": result.config.to_dict(),
    }


def policy_from_checkpoint(data: dict) -> SoftmaxPolicy:
    missing = {"logits", "algo"} - set(data)
    if missing:
        raise ConfigError(f"checkpoint missing {sorted(missing)}")
    return SoftmaxPolicy(np.asarray(data["logits"], dtype=float))

