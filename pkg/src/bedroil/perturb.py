"""Gridworld dynamics, structured kernel shifts and evaluation under shift."""

from __future__ import annotations

import csv
import io
import warnings
from collections import deque
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import softmax

from .mdp import (
    PolicyLike,
    TabularMdp,
    as_probs,
    expected_return,
    sample_trajectory,
    validate_mdp,
)
from .oracle import KernelPool, max_row_tv, sample_ball_kernel
from .robust import expected_imitation_loss

# up, down, left, right as (drow, dcol)
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
ACTION_NAMES = ("up", "down", "left", "right")
WIND_MOVE = 1  # wind pushes down


@dataclass(frozen=True)
class GridworldSpec:
    width: int
    height: int
    goal: tuple[int, int]
    walls: frozenset = frozenset()
    start: tuple[int, int] | None = (0, 0)  # None: uniform over free non-goal cells
    slip_prob: float = 0.0
    wind: tuple[float, ...] = ()  # per-column probability of being pushed down
    wind_scale: float = 1.0
    step_noise: float = 0.0  # mixes each row with a seeded random distribution
    step_noise_seed: int = 0
    discount: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(w) for w in self.walls))
        object.__setattr__(self, "goal", tuple(self.goal))
        if self.start is not None:
            object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "wind", tuple(float(x) for x in self.wind))
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.goal in self.walls:
            raise ValueError("goal cell is a wall")
        if not self._inside(self.goal):
            raise ValueError("goal outside the grid")
        if self.start is not None and (self.start in self.walls or not self._inside(self.start)):
            raise ValueError("start must be a free cell")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ValueError("slip_prob must lie in [0, 1)")
        if self.wind and len(self.wind) != self.width:
            raise ValueError("wind needs one entry per column")
        if any(w < 0 for w in self.wind) or self.wind_scale < 0:
            raise ValueError("wind must be nonnegative")
        if self.slip_prob + self.max_wind > 1.0 + 1e-12:
            raise ValueError("slip_prob + max wind exceeds 1")
        if not 0.0 <= self.step_noise <= 1.0:
            raise ValueError("step_noise must lie in [0, 1]")

    def _inside(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    @property
    def max_wind(self) -> float:
        return self.wind_scale * max(self.wind, default=0.0)

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.walls]

    def to_dict(self) -> dict:
        return {
            "width": self.width, "height": self.height, "goal": list(self.goal),
            "walls": sorted(list(w) for w in self.walls),
            "start": None if self.start is None else list(self.start),
            "slip_prob": self.slip_prob, "wind": list(self.wind), "wind_scale": self.wind_scale,
            "step_noise": self.step_noise, "step_noise_seed": self.step_noise_seed,
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridworldSpec":
        data = dict(data)
        data["walls"] = frozenset(tuple(w) for w in data.get("walls", ()))
        return cls(**data)


@dataclass(frozen=True)
class Gridworld:
    spec: GridworldSpec
    mdp: TabularMdp
    reward: np.ndarray  # [s, a]; evaluation only
    cells: tuple

    def state_of(self, cell) -> int:
        return self.cells.index(tuple(cell))


def _step(spec: GridworldSpec, cell, move):
    r, c = cell[0] + move[0], cell[1] + move[1]
    if not spec._inside((r, c)) or (r, c) in spec.walls:
        return cell
    return (r, c)


def _reachable(spec: GridworldSpec, start_cells) -> set:
    seen, queue = set(start_cells), deque(start_cells)
    while queue:
        cell = queue.popleft()
        for mv in MOVES:
            nxt = _step(spec, cell, mv)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def build_gridworld(spec: GridworldSpec) -> Gridworld:
    """Tabular MDP for ``spec``; the goal is absorbing and pays 1 per step.

    From a non-goal cell the intended move happens with probability
    ``1 - slip - wind[col]``; with probability ``slip`` a uniformly random
    direction is taken instead and with probability ``wind[col]`` the agent
    is pushed down. Blocked moves leave the agent in place.
    """
    cells = spec.cells
    index = {cell: i for i, cell in enumerate(cells)}
    S, A = len(cells), len(MOVES)
    kernel = np.zeros((S, A, S))
    goal = index[spec.goal]
    for cell, s in index.items():
        if s == goal:
            kernel[s, :, s] = 1.0
            continue
        wind = spec.wind_scale * spec.wind[cell[1]] if spec.wind else 0.0
        for a, mv in enumerate(MOVES):
            kernel[s, a, index[_step(spec, cell, mv)]] += 1.0 - spec.slip_prob - wind
            for mv2 in MOVES:
                kernel[s, a, index[_step(spec, cell, mv2)]] += spec.slip_prob / A
            kernel[s, a, index[_step(spec, cell, MOVES[WIND_MOVE])]] += wind
    if spec.step_noise > 0:
        noise_rng = np.random.default_rng(spec.step_noise_seed)
        noise = noise_rng.dirichlet(np.ones(S), size=(S, A))
        noise[goal] = kernel[goal]
        kernel = (1.0 - spec.step_noise) * kernel + spec.step_noise * noise
    kernel /= kernel.sum(axis=2, keepdims=True)

    if spec.start is None:
        mu = np.array([0.0 if s == goal else 1.0 for s in range(S)])
        starts = [c for c in cells if c != spec.goal]
    else:
        mu = np.zeros(S)
        mu[index[spec.start]] = 1.0
        starts = [spec.start]
    mu /= mu.sum()
    if spec.goal not in _reachable(spec, starts):
        warnings.warn("goal is unreachable from the start cells", stacklevel=2)

    reward = np.zeros((S, A))
    reward[goal] = 1.0
    mdp = TabularMdp(S, A, kernel, mu, spec.discount)
    validate_mdp(mdp)
    return Gridworld(spec, mdp, reward, tuple(cells))


def value_iteration(mdp: TabularMdp, reward: np.ndarray, tol: float = 1e-10, max_sweeps: int = 10_000):
    """Optimal ``Q*`` by value iteration; raises if it fails to converge."""
    q = np.zeros_like(reward, dtype=float)
    for _ in range(max_sweeps):
        v = q.max(axis=1)
        q_new = reward + mdp.discount * mdp.kernel @ v
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    raise RuntimeError(f"value iteration did not converge in {max_sweeps} sweeps")


def make_expert(world: Gridworld, temperature: float = 0.1) -> np.ndarray:
    """Softmax of optimal Q-values at the given temperature."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    q = value_iteration(world.mdp, world.reward)
    return softmax(q / temperature, axis=1)


def worst_case_over_ball(
    policy: PolicyLike,
    mdp: TabularMdp,
    expert_policy: PolicyLike,
    rho_prime: float,
    num_kernels: int,
    rng: np.random.Generator,
    loss_mode: str = "exact_kl",
    pool: KernelPool | None = None,
) -> tuple[int, float]:
    """Empirical worst imitation loss over sampled kernels in the TV ball.

    Candidate ``-1`` is the nominal kernel. With a ``pool``, its directions
    are reused (``num_kernels`` and ``rng`` are then ignored).
    """
    nominal = mdp.kernel
    if pool is None:
        pool = KernelPool.draw(nominal, num_kernels, rng)
    best_id, best = -1, expected_imitation_loss(mdp, policy, expert_policy, loss_mode)
    if rho_prime == 0:
        return best_id, best
    for i, kernel in enumerate(pool.kernels(nominal, rho_prime)):
        val = expected_imitation_loss(mdp.with_kernel(kernel), policy, expert_policy, loss_mode)
        if val > best:
            best_id, best = i, val
    return best_id, best


def worst_case_curve(
    policy: PolicyLike,
    mdp: TabularMdp,
    expert_policy: PolicyLike,
    radii,
    num_kernels: int,
    rng: np.random.Generator,
    loss_mode: str = "exact_kl",
) -> list[float]:
    """Worst case over nested candidate sets: the set at radius r contains
    every kernel sampled for radii up to r (all of which lie in the r-ball)."""
    pool = KernelPool.draw(mdp.kernel, num_kernels, rng)
    out, running = [], -np.inf
    for r in sorted(radii):
        _, val = worst_case_over_ball(policy, mdp, expert_policy, r, 0, rng, loss_mode, pool=pool)
        running = max(running, val)
        out.append(running)
    return out


SWEEP_PARAMS = ("slip_prob", "wind_scale", "kernel_tv_random")
SWEEP_COLUMNS = (
    "param", "value", "seed", "sample", "exact_return", "mc_return_mean", "mc_return_std",
    "exact_imitation_loss", "kernel_tv_radius", "measured_tv", "skipped",
)


@dataclass(frozen=True)
class PerturbationSweep:
    param: str
    values: tuple[float, ...]
    samples_per_value: int = 1
    seed: int = 0
    rollouts: int = 100
    horizon: int | None = None  # None: geometric episode lengths

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}")
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted ascending")
        if self.samples_per_value < 1 or self.rollouts < 1:
            raise ValueError("samples_per_value and rollouts must be positive")


def _perturbed(world: Gridworld, param: str, value: float, rng: np.random.Generator):
    """Return (kernel, declared per-row TV radius) for one sweep point."""
    spec = world.spec
    nominal = world.mdp.kernel
    if param == "slip_prob":
        new = replace(spec, slip_prob=value)
        declared = abs(value - spec.slip_prob)
    elif param == "wind_scale":
        new = replace(spec, wind_scale=value)
        declared = abs(value - spec.wind_scale) * max(spec.wind, default=0.0)
    else:
        return sample_ball_kernel(nominal, value, rng), value
    return build_gridworld(new).mdp.kernel, declared


def monte_carlo_return(
    mdp: TabularMdp,
    policy: PolicyLike,
    reward: np.ndarray,
    rollouts: int,
    rng: np.random.Generator,
    horizon: int | None = None,
) -> np.ndarray:
    """Per-rollout returns. Geometric episodes (``horizon=None``) give an
    unbiased estimate of the exact discounted return: each reward is summed
    undiscounted while the episode survives with probability ``gamma``."""
    probs = as_probs(policy)
    out = np.empty(rollouts)
    for i in range(rollouts):
        if horizon is None:
            traj = sample_trajectory(mdp, probs, rng, geometric=True)
            out[i] = sum(reward[s, a] for s, a in zip(traj.states, traj.actions))
        else:
            traj = sample_trajectory(mdp, probs, rng, horizon)
            disc = mdp.discount ** np.arange(len(traj.actions))
            out[i] = float(np.sum(disc * reward[traj.states[:-1], traj.actions]))
    return out


def evaluate_under_shift(
    policy: PolicyLike,
    nominal_spec: GridworldSpec,
    sweep: PerturbationSweep,
    expert_policy: PolicyLike,
    loss_mode: str = "exact_kl",
) -> list[dict]:
    """One record per (sweep value, sample): exact return, Monte Carlo
    return over ``sweep.rollouts`` seeded rollouts, and the exact expert
    imitation loss under the shifted kernel."""
    world = build_gridworld(nominal_spec)
    probs, ex = as_probs(policy), as_probs(expert_policy)
    seeds = np.random.SeedSequence(sweep.seed).spawn(len(sweep.values))
    records = []
    for value, seq in zip(sweep.values, seeds):
        point_rngs = [np.random.default_rng(s) for s in seq.spawn(sweep.samples_per_value)]
        for k, rng in enumerate(point_rngs):
            rec = {"param": sweep.param, "value": value, "seed": sweep.seed, "sample": k}
            try:
                kernel, declared = _perturbed(world, sweep.param, value, rng)
                shifted = world.mdp.with_kernel(kernel)
                validate_mdp(shifted)
            except ValueError as exc:
                rec.update({c: float("nan") for c in SWEEP_COLUMNS[4:10]})
                rec["skipped"] = str(exc)
                records.append(rec)
                continue
            mc = monte_carlo_return(shifted, probs, world.reward, sweep.rollouts, rng, sweep.horizon)
            rec.update(
                exact_return=expected_return(shifted, probs, world.reward),
                mc_return_mean=float(mc.mean()),
                mc_return_std=float(mc.std(ddof=1)) if len(mc) > 1 else 0.0,
                exact_imitation_loss=expected_imitation_loss(shifted, probs, ex, loss_mode),
                kernel_tv_radius=declared,
                measured_tv=max_row_tv(kernel, world.mdp.kernel),
                skipped="",
            )
            records.append(rec)
    return records


def records_to_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for rec in records:
        row = []
        for col in SWEEP_COLUMNS:
            v = rec[col]
            row.append(f"{v:.17g}" if isinstance(v, float) else v)
        writer.writerow(row)
    return buf.getvalue()


def acceptance_gridworld(**overrides) -> GridworldSpec:
    """The 5x5 layout used by the robustness experiments.

    The nominal kernel has a little slip: with fully deterministic moves
    every nominal ``(s, a)`` has a single successor, so no reweighting of
    nominal transitions can change the occupancy and the robust objective
    coincides with plain imitation.
    """
    base = dict(
        width=5, height=5, goal=(4, 4),
        walls=frozenset({(1, 1), (1, 3), (3, 1), (3, 3)}),
        start=(0, 0), slip_prob=0.1, discount=0.9,
    )
    base.update(overrides)
    return GridworldSpec(**base)
