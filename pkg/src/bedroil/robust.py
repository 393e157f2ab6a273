"""Scoring machinery for balance-constrained robust imitation.

For a learner policy ``pi`` and dual variables ``(Q, tau)`` every nominal
transition ``(s, a, s')`` gets a score

    e(s, a, s') = L_pi(s) + gamma * E_{a' ~ pi_D(.|s')} Q(s', a') - Q(s, a)

and the adversary's importance weight ``w* = max(0, (f')^{-1}(e / tau))``.
The dual stage minimizes

    (1 - gamma) E_{mu, pi_D}[Q] + rho tau + E_{d0}[-tau f(w*) + w* e]

over ``(Q, tau)`` and the policy stage minimizes ``E_{d0}[w* L_pi(s)]``.
Gradients hold ``w*`` fixed: it is the exact inner argmax, so by the
envelope theorem the detached gradient is the true gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import softmax, xlogy

from .dataset import Dataset, effective_initial_states
from .divergence import FGenerator
from .mdp import PolicyLike, SoftmaxPolicy, TabularMdp, as_probs, state_occupancy, triplet_occupancy

TAU_MIN = 1e-4
NLL_FLOOR = 1e-12
LOSS_MODES = ("exact_kl", "sample_nll")


@dataclass(frozen=True)
class DualState:
    q_table: np.ndarray
    tau: float
    tau_min: float = TAU_MIN

    def __post_init__(self):
        q = np.array(self.q_table, dtype=float)
        if not np.all(np.isfinite(q)):
            raise ValueError("q_table must be finite")
        if not np.isfinite(self.tau) or self.tau < self.tau_min:
            raise ValueError(f"tau={self.tau} below floor {self.tau_min}")
        q.setflags(write=False)
        object.__setattr__(self, "q_table", q)
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def zeros(cls, num_states: int, num_actions: int, tau: float = 1.0, tau_min: float = TAU_MIN):
        return cls(np.zeros((num_states, num_actions)), tau, tau_min)

    def step(self, grad_q: np.ndarray, grad_tau: float, lr: float) -> "DualState":
        """Gradient step with ``tau`` projected back onto ``[tau_min, inf)``."""
        tau = max(self.tau_min, self.tau - lr * grad_tau)
        return DualState(self.q_table - lr * grad_q, tau, self.tau_min)


@dataclass(frozen=True)
class Samples:
    """A weighted set of nominal transitions plus the initial-value measure.

    ``init_sa[s, a]`` is the distribution used for ``E_{mu, pi_D}[Q]``.
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    next_actions: np.ndarray
    prob: np.ndarray
    init_sa: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    def subset(self, idx: np.ndarray) -> "Samples":
        """Equal-weight minibatch of the given sample indices."""
        n = len(idx)
        return Samples(
            self.states[idx], self.actions[idx], self.next_states[idx],
            self.next_actions[idx], np.full(n, 1.0 / n), self.init_sa,
        )


@dataclass(frozen=True, eq=False)
class Problem:
    """What the learner gets to see.

    Exact mode (``dataset is None``): expectations are taken against the
    nominal triplet occupancy of the expert and the true initial
    distribution. Sample mode: against dataset transitions and the
    effective initial states.
    """

    num_states: int
    num_actions: int
    discount: float
    expert: Optional[np.ndarray] = None
    mdp: Optional[TabularMdp] = None
    dataset: Optional[Dataset] = None
    loss_mode: str = "exact_kl"

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.expert is not None:
            object.__setattr__(self, "expert", as_probs(self.expert))
        if self.loss_mode == "exact_kl" and self.expert is None:
            raise ValueError("exact_kl loss requires a known expert policy")
        if self.dataset is None and (self.mdp is None or self.expert is None):
            raise ValueError("exact mode needs both the MDP and the expert policy")
        if self.dataset is not None and len(self.dataset.transitions) == 0:
            raise ValueError("dataset has no transitions")

    @classmethod
    def exact(cls, mdp: TabularMdp, expert: PolicyLike, loss_mode: str = "exact_kl") -> "Problem":
        return cls(mdp.num_states, mdp.num_actions, mdp.discount, as_probs(expert), mdp, None, loss_mode)

    @classmethod
    def from_dataset(
        cls,
        dataset: Dataset,
        discount: float,
        expert: PolicyLike | None = None,
        loss_mode: str = "sample_nll",
    ) -> "Problem":
        exp = None if expert is None else as_probs(expert)
        return cls(dataset.num_states, dataset.num_actions, discount, exp, None, dataset, loss_mode)

    @property
    def mode(self) -> str:
        return "exact" if self.dataset is None else "sample"

    def samples(self) -> Samples:
        if self.dataset is None:
            mass = triplet_occupancy(self.mdp, self.expert).mass
            s, a, s2 = np.nonzero(mass > 0)
            none = np.full(len(s), -1)
            init = self.mdp.initial_dist[:, None] * self.expert
            return Samples(s, a, s2, none, mass[s, a, s2], init)
        tr = self.dataset.transitions
        n = len(tr)
        if self.expert is not None:
            init = effective_initial_states(self.dataset)[:, None] * self.expert
        else:
            init = self.dataset.state_action_counts()
            init = init / init.sum()
        return Samples(tr.states, tr.actions, tr.next_states, tr.next_actions, np.full(n, 1.0 / n), init)


def _policy_logits(policy) -> np.ndarray:
    if isinstance(policy, SoftmaxPolicy):
        return policy.logits
    return np.asarray(policy, dtype=float)


def imitation_loss(
    policy: PolicyLike,
    s: int,
    *,
    expert: PolicyLike | None = None,
    action: int | None = None,
) -> tuple[float, np.ndarray]:
    """Per-state imitation loss and its gradient w.r.t. the logits of row ``s``.

    With ``expert`` given: ``KL(pi_D(.|s) || pi(.|s))``. With ``action``
    given: ``-log pi(action|s)``, an unbiased estimate of the cross-entropy
    (which exceeds the KL by the expert's entropy at ``s``).
    """
    pi = as_probs(policy)[s]
    if (expert is None) == (action is None):
        raise ValueError("pass exactly one of expert= or action=")
    if expert is not None:
        pd = as_probs(expert)[s]
        value = float(np.sum(xlogy(pd, pd) - xlogy(pd, pi)))
        return value, pi - pd
    onehot = np.zeros_like(pi)
    onehot[action] = 1.0
    return float(-np.log(max(pi[action], NLL_FLOOR))), pi - onehot


def kl_per_state(expert: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return np.sum(xlogy(expert, expert) - xlogy(expert, probs), axis=1)


def state_loss(expert: np.ndarray, probs: np.ndarray, loss_mode: str = "exact_kl") -> np.ndarray:
    """``L_pi(s)`` for every state when the expert policy is known.

    ``sample_nll`` gives the cross-entropy, the population value of the
    per-sample negative log-likelihood.
    """
    if loss_mode not in LOSS_MODES:
        raise ValueError(f"unknown loss_mode {loss_mode!r}")
    ce = -np.sum(xlogy(expert, np.maximum(probs, NLL_FLOOR)), axis=1)
    if loss_mode == "sample_nll":
        return ce
    return kl_per_state(expert, probs)


def expected_imitation_loss(
    mdp: TabularMdp,
    policy: PolicyLike,
    expert: PolicyLike,
    loss_mode: str = "exact_kl",
) -> float:
    """``E_{s ~ d^{pi_D}_T}[L_pi(s)]`` computed exactly under ``mdp.kernel``."""
    ex = as_probs(expert)
    return float(state_occupancy(mdp, ex) @ state_loss(ex, as_probs(policy), loss_mode))


def state_mean(values: np.ndarray, samples: Samples, num_states: int) -> np.ndarray:
    """Probability-weighted mean of per-sample ``values`` within each state."""
    num = np.zeros(num_states)
    den = np.zeros(num_states)
    np.add.at(num, samples.states, samples.prob * values)
    np.add.at(den, samples.states, samples.prob)
    return np.divide(num, den, out=np.zeros(num_states), where=den > 0)


def sample_losses(
    probs: np.ndarray,
    samples: Samples,
    loss_mode: str,
    expert: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, int]:
    """State loss ``L_pi(s_i)`` at every sample; second value counts floored NLL terms.

    In ``sample_nll`` mode the per-sample NLLs are averaged within each
    state, which estimates the cross-entropy ``H(pi_D(.|s), pi(.|s))``
    (exactly so when the samples are the nominal triplet occupancy). The
    score must not depend on the logged action beyond ``Q(s, a)``.
    """
    if loss_mode == "exact_kl":
        return kl_per_state(expert, probs)[samples.states], 0
    p = probs[samples.states, samples.actions]
    floored = int(np.count_nonzero(p < NLL_FLOOR))
    nll = -np.log(np.maximum(p, NLL_FLOOR))
    return state_mean(nll, samples, probs.shape[0])[samples.states], floored


def next_value(
    q_table: np.ndarray,
    next_states: np.ndarray,
    next_actions: np.ndarray,
    expert: Optional[np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """``E_{a' ~ pi_D(.|s')} Q(s', a')`` per sample, and a mask of samples
    whose expectation had to be set to zero (no expert, no logged action)."""
    if expert is not None:
        return np.sum(expert[next_states] * q_table[next_states], axis=1), np.zeros(len(next_states), bool)
    missing = next_actions < 0
    vals = q_table[next_states, np.where(missing, 0, next_actions)]
    return np.where(missing, 0.0, vals), missing


def e_score(
    dual: DualState,
    policy: PolicyLike,
    expert_policy: PolicyLike | None,
    discount: float,
    s: int,
    a: int,
    s_next: int,
    loss_value: float,
    next_action: int | None = None,
) -> float:
    """Score of a single transition; see the module docstring."""
    del policy  # the loss value already carries the policy dependence
    q = dual.q_table
    if expert_policy is not None:
        nxt = float(as_probs(expert_policy)[s_next] @ q[s_next])
    elif next_action is not None and next_action >= 0:
        nxt = float(q[s_next, next_action])
    else:
        nxt = 0.0
    return float(loss_value + discount * nxt - q[s, a])


def optimal_weight(gen: FGenerator, e, tau: float, tau_min: float = TAU_MIN):
    """Closed-form maximizer of ``w -> -tau f(w) + w e`` over ``w >= 0``.

    Below ``tau_min`` the ``tau = 0`` case is emulated: the cap if ``e > 0``
    and 0 otherwise (including the tie ``e = 0``).
    """
    e = np.asarray(e, dtype=float)
    if not gen.has_inverse:
        gen.inverse_derivative(0.0)  # raises
    if tau < tau_min:
        out = np.where(e > 0, gen.saturation_weight, 0.0)
    else:
        out = gen.weight(e / tau)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DualEval:
    value: float
    grad_q: np.ndarray
    grad_tau: float
    weights: np.ndarray
    scores: np.ndarray
    losses: np.ndarray
    missing_next: int
    floored: int


def evaluate_scores(
    dual: DualState,
    probs: np.ndarray,
    problem: Problem,
    samples: Samples,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    losses, floored = sample_losses(probs, samples, problem.loss_mode, problem.expert)
    nxt, missing = next_value(dual.q_table, samples.next_states, samples.next_actions, problem.expert)
    e = losses + problem.discount * nxt - dual.q_table[samples.states, samples.actions]
    return e, losses, missing, floored


def dual_objective(
    dual: DualState,
    policy: PolicyLike,
    problem: Problem,
    gen: FGenerator,
    rho: float,
    *,
    samples: Samples | None = None,
    divergence_coef: str = "tau",
) -> DualEval:
    """Dual-stage objective and its envelope gradient in ``(Q, tau)``.

    ``divergence_coef="rho"`` multiplies ``f(w*)`` by ``rho`` instead of
    ``tau``; the weights are still the ``tau``-based closed form, so that
    variant is only useful for side-by-side comparison.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if divergence_coef not in ("tau", "rho"):
        raise ValueError(f"divergence_coef must be 'tau' or 'rho', got {divergence_coef!r}")
    if samples is None:
        samples = problem.samples()
    if len(samples) == 0:
        raise ValueError("no samples to evaluate the objective on")
    gamma = problem.discount
    probs = as_probs(policy)
    e, losses, missing, floored = evaluate_scores(dual, probs, problem, samples)
    w = optimal_weight(gen, e, dual.tau, dual.tau_min)
    w = np.atleast_1d(w)
    fw = gen(w)
    coef = dual.tau if divergence_coef == "tau" else rho
    p = samples.prob
    value = (
        (1.0 - gamma) * float(np.sum(samples.init_sa * dual.q_table))
        + rho * dual.tau
        + float(np.sum(p * (-coef * fw + w * e)))
    )

    pw = p * w
    grad_q = (1.0 - gamma) * samples.init_sa.copy()
    np.add.at(grad_q, (samples.states, samples.actions), -pw)
    if problem.expert is not None:
        inflow = np.zeros(problem.num_states)
        np.add.at(inflow, samples.next_states, pw)
        grad_q += gamma * inflow[:, None] * problem.expert
    else:
        keep = ~missing
        np.add.at(grad_q, (samples.next_states[keep], samples.next_actions[keep]), gamma * pw[keep])
    grad_tau = rho - float(np.sum(p * fw)) if divergence_coef == "tau" else rho
    return DualEval(value, grad_q, grad_tau, w, e, losses, int(missing.sum()), floored)


def policy_loss_grad(
    probs: np.ndarray,
    problem: Problem,
    samples: Samples,
    weights: np.ndarray,
) -> tuple[float, np.ndarray]:
    """``sum_i p_i w_i L_pi(s_i)`` and its gradient w.r.t. softmax logits."""
    losses, _ = sample_losses(probs, samples, problem.loss_mode, problem.expert)
    pw = samples.prob * weights
    value = float(np.sum(pw * losses))
    mass = np.zeros(problem.num_states)
    np.add.at(mass, samples.states, pw)
    grad = mass[:, None] * probs
    if problem.loss_mode == "exact_kl":
        grad -= mass[:, None] * problem.expert
    else:
        # d L(s) / d logits = pi(s) - empirical action distribution at s
        prob_s = np.zeros(problem.num_states)
        np.add.at(prob_s, samples.states, samples.prob)
        scale = np.divide(mass, prob_s, out=np.zeros_like(mass), where=prob_s > 0)
        np.add.at(grad, (samples.states, samples.actions), -samples.prob * scale[samples.states])
    return value, grad


def weighted_policy_loss(
    policy: PolicyLike,
    dual: DualState,
    problem: Problem,
    gen: FGenerator,
    *,
    samples: Samples | None = None,
    weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Policy-stage objective ``E_{d0}[w* L_pi(s)]`` with ``w*`` detached.

    ``policy`` may be a :class:`SoftmaxPolicy` or a raw logits array; the
    gradient is taken w.r.t. those logits. Pass ``weights`` to override the
    closed-form weights (e.g. all ones for plain behavioral cloning).
    """
    if samples is None:
        samples = problem.samples()
    probs = softmax(_policy_logits(policy), axis=1)
    if weights is None:
        e, _, _, _ = evaluate_scores(dual, probs, problem, samples)
        weights = np.atleast_1d(optimal_weight(gen, e, dual.tau, dual.tau_min))
    return policy_loss_grad(probs, problem, samples, np.asarray(weights, dtype=float))


def implied_occupancy(samples: Samples, weights: np.ndarray, num_states: int, num_actions: int) -> np.ndarray:
    """Aggregate ``p * w`` into an ``[s, a, s']`` tensor (the adversary's occupancy)."""
    mass = np.zeros((num_states, num_actions, num_states))
    np.add.at(mass, (samples.states, samples.actions, samples.next_states), samples.prob * weights)
    return mass
