"""Tabular MDPs, policies and exact discounted occupancy measures."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import softmax

PROB_TOL = 1e-9
CLAMP_TOL = 1e-12
MAX_ENTRIES = 10**6


class MdpError(ValueError):
    """Raised when an MDP or policy violates its invariants."""


@dataclass(frozen=True)
class TabularMdp:
    num_states: int
    num_actions: int
    kernel: np.ndarray  # [s, a, s']
    initial_dist: np.ndarray
    discount: float

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=float)
        mu = np.array(self.initial_dist, dtype=float)
        kernel.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "discount", float(self.discount))

    def with_kernel(self, kernel: np.ndarray) -> "TabularMdp":
        return TabularMdp(self.num_states, self.num_actions, kernel, self.initial_dist, self.discount)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "kernel": self.kernel.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TabularMdp":
        missing = {"num_states", "num_actions", "kernel", "initial_dist", "discount"} - set(data)
        if missing:
            raise MdpError(f"MDP document missing fields: {sorted(missing)}")
        mdp = cls(
            int(data["num_states"]),
            int(data["num_actions"]),
            np.asarray(data["kernel"], dtype=float),
            np.asarray(data["initial_dist"], dtype=float),
            float(data["discount"]),
        )
        validate_mdp(mdp)
        return mdp


def validate_mdp(mdp: TabularMdp) -> None:
    """Raise :class:`MdpError` describing the first violated invariant."""
    S, A = mdp.num_states, mdp.num_actions
    if S < 1 or A < 1:
        raise MdpError(f"num_states and num_actions must be positive, got ({S}, {A})")
    if not 0.0 < mdp.discount < 1.0:
        raise MdpError(f"discount out of range (0, 1): {mdp.discount}")
    if mdp.kernel.shape != (S, A, S):
        raise MdpError(f"kernel shape {mdp.kernel.shape} != {(S, A, S)}")
    if S * A * S > MAX_ENTRIES:
        raise MdpError(f"kernel has {S * A * S} entries, cap is {MAX_ENTRIES}")
    if mdp.initial_dist.shape != (S,):
        raise MdpError(f"initial_dist shape {mdp.initial_dist.shape} != {(S,)}")
    if not np.all(np.isfinite(mdp.kernel)):
        raise MdpError("kernel contains non-finite entries")
    neg = np.argwhere(mdp.kernel < 0)
    if len(neg):
        s, a, s2 = neg[0]
        raise MdpError(f"kernel[{s}, {a}, {s2}] = {mdp.kernel[s, a, s2]} is negative")
    sums = mdp.kernel.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
    if len(bad):
        s, a = bad[0]
        raise MdpError(f"kernel row (s={s}, a={a}) sums to {sums[s, a]!r}, expected 1")
    mu = mdp.initial_dist
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise MdpError(f"initial_dist has negative or non-finite entries: {mu}")
    if abs(mu.sum() - 1.0) > PROB_TOL:
        raise MdpError(f"initial_dist sums to {mu.sum()!r}, expected 1")


@dataclass(frozen=True)
class StochasticPolicy:
    """Row-stochastic policy table ``probs[s, a] = pi(a|s)``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise MdpError(f"policy must be a 2-d table, got shape {probs.shape}")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL):
            raise MdpError("policy rows must be probability vectors")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class SoftmaxPolicy:
    """Unconstrained logits; ``materialize`` gives the row-wise softmax."""

    logits: np.ndarray

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "SoftmaxPolicy":
        return cls(np.zeros((num_states, num_actions)))

    def materialize(self) -> StochasticPolicy:
        return StochasticPolicy(softmax(self.logits, axis=1))


PolicyLike = Union[StochasticPolicy, SoftmaxPolicy, np.ndarray]


def as_probs(policy: PolicyLike) -> np.ndarray:
    """Return the ``[s, a]`` probability table of any policy representation."""
    if isinstance(policy, SoftmaxPolicy):
        return softmax(policy.logits, axis=1)
    if isinstance(policy, StochasticPolicy):
        return policy.probs
    return np.asarray(policy, dtype=float)


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / num_actions)


@dataclass(frozen=True)
class TripletOccupancy:
    """Discounted occupancy over ``(s, a, s')`` triplets."""

    mass: np.ndarray

    @property
    def state_action(self) -> np.ndarray:
        return self.mass.sum(axis=2)

    @property
    def state(self) -> np.ndarray:
        return self.mass.sum(axis=(1, 2))

    @property
    def next_state(self) -> np.ndarray:
        return self.mass.sum(axis=(0, 1))


def policy_transition_matrix(mdp: TabularMdp, policy: PolicyLike) -> np.ndarray:
    """``P[s, s~] = sum_a pi(a|s) T(s~|s, a)``."""
    return np.einsum("sa,sat->st", as_probs(policy), mdp.kernel)


def _clean_distribution(d: np.ndarray, what: str) -> np.ndarray:
    if np.any(d < -CLAMP_TOL):
        raise MdpError(f"{what} has negative entry {d.min()!r} beyond clamp tolerance")
    d = np.where(d < 0, 0.0, d)
    return d / d.sum()


def state_occupancy(mdp: TabularMdp, policy: PolicyLike) -> np.ndarray:
    """Solve ``d = (1 - gamma) mu + gamma P_pi^T d`` by a dense linear solve."""
    gamma = mdp.discount
    P = policy_transition_matrix(mdp, policy)
    system = np.eye(mdp.num_states) - gamma * P.T
    try:
        d = np.linalg.solve(system, (1.0 - gamma) * mdp.initial_dist)
    except np.linalg.LinAlgError as exc:
        raise MdpError(f"occupancy linear solve failed: {exc}") from exc
    return _clean_distribution(d, "state occupancy")


def triplet_occupancy(mdp: TabularMdp, policy: PolicyLike) -> TripletOccupancy:
    """``d(s, a, s') = d(s) pi(a|s) T(s'|s, a)``."""
    probs = as_probs(policy)
    d = state_occupancy(mdp, probs)
    mass = d[:, None, None] * probs[:, :, None] * mdp.kernel
    return TripletOccupancy(mass)


def state_action_occupancy(mdp: TabularMdp, policy: PolicyLike) -> np.ndarray:
    probs = as_probs(policy)
    return state_occupancy(mdp, probs)[:, None] * probs


def balance_residual(
    occ: TripletOccupancy | np.ndarray,
    policy: PolicyLike,
    initial_dist: np.ndarray,
    discount: float,
) -> float:
    """Max-norm violation of the Bellman flow (balance) equation.

    The constraint is stated purely in terms of the triplet measure, the
    policy and the initial distribution, so it holds for the occupancy of
    ``policy`` under any kernel.
    """
    mass = occ.mass if isinstance(occ, TripletOccupancy) else np.asarray(occ, dtype=float)
    probs = as_probs(policy)
    mu = np.asarray(initial_dist, dtype=float)
    outflow = mass.sum(axis=2)
    inflow = mass.sum(axis=(0, 1))
    rhs = (1.0 - discount) * mu[:, None] * probs + discount * probs * inflow[:, None]
    return float(np.max(np.abs(outflow - rhs)))


def expected_return(mdp: TabularMdp, policy: PolicyLike, reward: np.ndarray) -> float:
    """Exact discounted return ``E[sum_t gamma^t r(s_t, a_t)]``."""
    sa = state_action_occupancy(mdp, policy)
    return float(np.sum(sa * reward) / (1.0 - mdp.discount))


@dataclass
class Trajectory:
    states: list[int]
    actions: list[int]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.actions)

    def to_record(self) -> dict:
        return {"states": [int(s) for s in self.states], "actions": [int(a) for a in self.actions]}


def sample_trajectory(
    mdp: TabularMdp,
    policy: PolicyLike,
    rng: np.random.Generator,
    horizon: int | None = None,
    *,
    geometric: bool = False,
) -> Trajectory:
    """Roll out ``policy`` under the MDP kernel.

    With ``geometric=True`` each step is followed by another with
    probability ``discount``, so the number of actions is geometric with
    mean ``1 / (1 - discount)``. Otherwise exactly ``horizon`` actions are
    taken. ``len(states) == len(actions) + 1`` in both modes.
    """
    if geometric == (horizon is not None):
        raise ValueError("pass exactly one of horizon=H or geometric=True")
    probs = as_probs(policy)
    S, A = probs.shape
    s = int(rng.choice(S, p=mdp.initial_dist))
    states, actions = [s], []
    while True:
        a = int(rng.choice(A, p=probs[s]))
        s = int(rng.choice(S, p=mdp.kernel[s, a]))
        actions.append(a)
        states.append(s)
        if geometric:
            if rng.random() >= mdp.discount:
                break
        elif len(actions) >= horizon:
            break
    mode = "geometric" if geometric else "fixed"
    return Trajectory(states, actions, {"horizon_mode": mode})


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=1, sort_keys=True) + "\n")


def load_mdp(path: str | Path) -> TabularMdp:
    return TabularMdp.from_dict(json.loads(Path(path).read_text()))


def random_mdp(
    num_states: int,
    num_actions: int,
    discount: float,
    rng: np.random.Generator,
    concentration: float = 1.0,
) -> TabularMdp:
    """Dirichlet kernel and initial distribution (full support almost surely)."""
    kernel = rng.dirichlet(np.full(num_states, concentration), size=(num_states, num_actions))
    mu = rng.dirichlet(np.full(num_states, concentration))
    return TabularMdp(num_states, num_actions, kernel, mu, discount)


def random_policy(num_states: int, num_actions: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(num_actions), size=num_states)
