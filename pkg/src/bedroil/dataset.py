"""Expert demonstrations: generation, JSON-lines storage, transition arrays."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .mdp import PolicyLike, TabularMdp, Trajectory, as_probs, sample_trajectory


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Transitions:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    next_actions: np.ndarray  # -1 where the trajectory ends

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True, eq=False)
class Dataset:
    trajectories: tuple[Trajectory, ...]
    num_states: int
    num_actions: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for i, traj in enumerate(self.trajectories):
            if len(traj.states) != len(traj.actions) + 1:
                raise DatasetError(
                    f"trajectory {i}: {len(traj.states)} states for {len(traj.actions)} actions"
                )
            if traj.states and (min(traj.states) < 0 or max(traj.states) >= self.num_states):
                raise DatasetError(f"trajectory {i}: state index out of range")
            if traj.actions and (min(traj.actions) < 0 or max(traj.actions) >= self.num_actions):
                raise DatasetError(f"trajectory {i}: action index out of range")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.num_actions == other.num_actions
            and [t.to_record() for t in self.trajectories]
            == [t.to_record() for t in other.trajectories]
        )

    def __len__(self) -> int:
        return len(self.trajectories)

    @cached_property
    def transitions(self) -> Transitions:
        s, a, s2, a2 = [], [], [], []
        for traj in self.trajectories:
            n = len(traj.actions)
            s.extend(traj.states[:n])
            a.extend(traj.actions)
            s2.extend(traj.states[1:])
            a2.extend(traj.actions[1:] + [-1] if n else [])
        as_int = lambda x: np.asarray(x, dtype=np.int64)
        return Transitions(as_int(s), as_int(a), as_int(s2), as_int(a2))

    @property
    def initial_states(self) -> np.ndarray:
        return np.asarray([t.states[0] for t in self.trajectories if t.states], dtype=np.int64)

    def state_action_counts(self) -> np.ndarray:
        tr = self.transitions
        counts = np.zeros((self.num_states, self.num_actions))
        np.add.at(counts, (tr.states, tr.actions), 1.0)
        return counts


def effective_initial_states(dataset: Dataset) -> np.ndarray:
    """Empirical distribution over every state visited in the dataset.

    Each state inside a trajectory is treated as an initial state, which
    gives the initial-value term far more coverage than the handful of true
    start states.
    """
    counts = np.zeros(dataset.num_states)
    used = 0
    for traj in dataset.trajectories:
        if not traj.actions:
            warnings.warn("skipping empty trajectory in effective initial states", stacklevel=2)
            continue
        np.add.at(counts, np.asarray(traj.states), 1.0)
        used += 1
    if used == 0:
        raise DatasetError("dataset has no nonempty trajectories")
    return counts / counts.sum()


def generate_dataset(
    mdp: TabularMdp,
    expert_policy: PolicyLike,
    num_trajectories: int,
    horizon: int,
    seed: int,
) -> Dataset:
    rng = np.random.default_rng(seed)
    probs = as_probs(expert_policy)
    trajs = [sample_trajectory(mdp, probs, rng, horizon) for _ in range(num_trajectories)]
    meta = {"horizon_mode": "fixed", "horizon": horizon, "seed": seed}
    return Dataset(tuple(trajs), mdp.num_states, mdp.num_actions, meta)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    lines = [json.dumps(t.to_record(), separators=(",", ":")) for t in dataset.trajectories]
    Path(path).write_text("".join(line + "\n" for line in lines))


def _parse_record(line: str, lineno: int) -> Trajectory:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise DatasetError(f"line {lineno}: record must be an object")
    for key in ("states", "actions"):
        if key not in rec:
            raise DatasetError(f"line {lineno}: record missing {key!r}")
        vals = rec[key]
        if not isinstance(vals, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in vals
        ):
            raise DatasetError(f"line {lineno}: {key!r} must be a list of nonnegative ints")
    extra = set(rec) - {"states", "actions"}
    if extra:
        raise DatasetError(f"line {lineno}: unexpected keys {sorted(extra)}")
    if len(rec["states"]) != len(rec["actions"]) + 1:
        raise DatasetError(
            f"line {lineno}: len(states)={len(rec['states'])} must equal "
            f"len(actions)+1={len(rec['actions']) + 1}"
        )
    return Trajectory(rec["states"], rec["actions"])


def load_dataset(
    path: str | Path,
    num_states: int | None = None,
    num_actions: int | None = None,
) -> Dataset:
    """Read a JSON-lines trajectory file.

    Unknown sizes are inferred as ``max index + 1``.
    """
    trajs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            trajs.append(_parse_record(line, lineno))
    if not trajs:
        warnings.warn(f"{path}: empty dataset", stacklevel=2)
    if num_states is None:
        num_states = 1 + max((max(t.states) for t in trajs if t.states), default=-1)
    if num_actions is None:
        num_actions = 1 + max((max(t.actions) for t in trajs if t.actions), default=-1)
    return Dataset(tuple(trajs), max(num_states, 0), max(num_actions, 0))
