"""Alternating optimization of the dual stage and the weighted policy stage."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from typing import Union

import numpy as np
from scipy.special import softmax

from .dataset import effective_initial_states  # noqa: F401  (re-exported)
from .divergence import DEFAULT_SATURATION, GENERATOR_NAMES, make_generator
from .mdp import SoftmaxPolicy, balance_residual
from .robust import (
    LOSS_MODES,
    TAU_MIN,
    DualState,
    Problem,
    Samples,
    dual_objective,
    implied_occupancy,
    policy_loss_grad,
)


class TrainingDivergedError(RuntimeError):
    def __init__(self, iteration: int, message: str, snapshot: dict):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.snapshot = snapshot


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 0.1
    generator: str = "soft_tv"
    lr_dual: float = 5e-2
    lr_policy: float = 5e-2
    steps: int = 2000
    update_ratio: tuple[int, int] = (1, 1)  # (policy, dual) steps per iteration
    batch_size: Union[int, str] = "exact"
    seed: int = 0
    tau_init: float = 1.0
    tau_min: float = TAU_MIN
    loss_mode: str = "exact_kl"
    saturation_weight: float = DEFAULT_SATURATION
    dual_first: bool = True
    divergence_coef: str = "tau"
    log_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "update_ratio", tuple(int(x) for x in self.update_ratio))
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.generator not in GENERATOR_NAMES:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.lr_dual <= 0 or self.lr_policy <= 0:
            raise ValueError("learning rates must be positive")
        if self.steps < 1 or self.log_every < 1:
            raise ValueError("steps and log_every must be positive")
        if len(self.update_ratio) != 2 or min(self.update_ratio) < 1:
            raise ValueError("update_ratio must be two positive integers")
        if not (self.batch_size == "exact" or (isinstance(self.batch_size, int) and self.batch_size > 0)):
            raise ValueError("batch_size must be a positive integer or 'exact'")
        if not 0 < self.tau_min <= self.tau_init:
            raise ValueError("need 0 < tau_min <= tau_init")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.divergence_coef not in ("tau", "rho"):
            raise ValueError("divergence_coef must be 'tau' or 'rho'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["update_ratio"] = list(self.update_ratio)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**data)


HISTORY_COLUMNS = (
    "iteration", "dual_objective", "policy_loss", "tau",
    "mean_weight", "max_weight", "balance_residual",
)


@dataclass
class TrainingHistory:
    iteration: list = field(default_factory=list)
    dual_objective: list = field(default_factory=list)
    policy_loss: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    mean_weight: list = field(default_factory=list)
    max_weight: list = field(default_factory=list)
    balance_residual: list = field(default_factory=list)
    warnings: dict = field(default_factory=dict)

    def append(self, **row) -> None:
        for key in HISTORY_COLUMNS:
            getattr(self, key).append(row[key])

    def __len__(self) -> int:
        return len(self.iteration)

    def array(self, key: str) -> np.ndarray:
        return np.asarray(getattr(self, key), dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for i in range(len(self)):
            row = [self.iteration[i]] + [f"{getattr(self, k)[i]:.17g}" for k in HISTORY_COLUMNS[1:]]
            writer.writerow(row)
        return buf.getvalue()


def _draw(samples: Samples, batch_size, rng: np.random.Generator) -> Samples:
    if batch_size == "exact":
        return samples
    idx = rng.choice(len(samples), size=batch_size, replace=True, p=samples.prob)
    return samples.subset(np.sort(idx))


def _check_finite(iteration: int, what: str, value: float, logits, dual: DualState | None):
    if not np.isfinite(value):
        snapshot = {"logits": np.array(logits).tolist()}
        if dual is not None:
            snapshot.update(q_table=dual.q_table.tolist(), tau=dual.tau)
        raise TrainingDivergedError(iteration, f"{what} is not finite ({value})", snapshot)


def _balance_diag(problem: Problem, samples: Samples, weights: np.ndarray) -> float:
    mass = implied_occupancy(samples, weights, problem.num_states, problem.num_actions)
    if problem.expert is not None:
        ref_policy = problem.expert
    else:
        counts = samples.init_sa
        ref_policy = np.where(counts.sum(1, keepdims=True) > 0, counts, 1.0)
        ref_policy = ref_policy / ref_policy.sum(axis=1, keepdims=True)
    init = samples.init_sa.sum(axis=1)
    return balance_residual(mass, ref_policy, init, problem.discount)


def train_bedroil(
    problem: Problem,
    config: SolverConfig,
    *,
    force_unit_weights: bool = False,
) -> tuple[SoftmaxPolicy, DualState, TrainingHistory]:
    """Alternate dual steps on ``(Q, tau)`` with policy steps on the logits.

    Each iteration draws one batch (the full sample set when
    ``batch_size == "exact"``), runs the dual steps then the policy steps
    (reversed when ``dual_first`` is false) on it, and logs diagnostics
    computed on that batch. ``force_unit_weights`` replaces the adversarial
    weights by ones in the policy stage, which turns the policy updates into
    plain behavioral cloning.
    """
    if problem.loss_mode != config.loss_mode:
        raise ValueError(f"problem loss_mode {problem.loss_mode!r} != config {config.loss_mode!r}")
    gen = make_generator(config.generator, config.saturation_weight)
    rng = np.random.default_rng(config.seed)
    all_samples = problem.samples()
    S, A = problem.num_states, problem.num_actions
    logits = np.zeros((S, A))
    dual = DualState.zeros(S, A, config.tau_init, config.tau_min)
    n_policy, n_dual = config.update_ratio
    history = TrainingHistory()
    floored = missing = 0

    for it in range(config.steps):
        batch = _draw(all_samples, config.batch_size, rng)
        ev = None

        def dual_stage():
            nonlocal dual, ev
            for _ in range(n_dual):
                ev = dual_objective(
                    dual, softmax(logits, axis=1), problem, gen, config.rho,
                    samples=batch, divergence_coef=config.divergence_coef,
                )
                _check_finite(it, "dual objective", ev.value, logits, dual)
                dual = dual.step(ev.grad_q, ev.grad_tau, config.lr_dual)

        def policy_stage():
            nonlocal logits, ev
            for _ in range(n_policy):
                probs = softmax(logits, axis=1)
                ev = dual_objective(
                    dual, probs, problem, gen, config.rho,
                    samples=batch, divergence_coef=config.divergence_coef,
                )
                w = np.ones(len(batch)) if force_unit_weights else ev.weights
                loss, grad = policy_loss_grad(probs, problem, batch, w)
                _check_finite(it, "policy loss", loss, logits, dual)
                logits = logits - config.lr_policy * grad

        stages = (dual_stage, policy_stage) if config.dual_first else (policy_stage, dual_stage)
        for stage in stages:
            stage()

        if it % config.log_every == 0 or it == config.steps - 1:
            probs = softmax(logits, axis=1)
            ev = dual_objective(
                dual, probs, problem, gen, config.rho,
                samples=batch, divergence_coef=config.divergence_coef,
            )
            w = np.ones(len(batch)) if force_unit_weights else ev.weights
            loss, _ = policy_loss_grad(probs, problem, batch, w)
            _check_finite(it, "dual objective", ev.value, logits, dual)
            floored += ev.floored
            missing += ev.missing_next
            history.append(
                iteration=it,
                dual_objective=ev.value,
                policy_loss=loss,
                tau=dual.tau,
                mean_weight=float(np.sum(batch.prob * ev.weights)),
                max_weight=float(ev.weights.max()),
                balance_residual=_balance_diag(problem, batch, ev.weights),
            )
    history.warnings = {"nll_floored": floored, "missing_next_action": missing}
    return SoftmaxPolicy(logits), dual, history


def train_bc(problem: Problem, config: SolverConfig) -> tuple[SoftmaxPolicy, TrainingHistory]:
    """Gradient descent on the unweighted imitation loss.

    Shares the batch schedule of :func:`train_bedroil`, so for the same seed
    it sees the same batches. Dual columns of the history are NaN.
    """
    if problem.loss_mode != config.loss_mode:
        raise ValueError(f"problem loss_mode {problem.loss_mode!r} != config {config.loss_mode!r}")
    rng = np.random.default_rng(config.seed)
    all_samples = problem.samples()
    logits = np.zeros((problem.num_states, problem.num_actions))
    n_policy = config.update_ratio[0]
    history = TrainingHistory()
    nan = float("nan")
    for it in range(config.steps):
        batch = _draw(all_samples, config.batch_size, rng)
        ones = np.ones(len(batch))
        for _ in range(n_policy):
            loss, grad = policy_loss_grad(softmax(logits, axis=1), problem, batch, ones)
            _check_finite(it, "policy loss", loss, logits, None)
            logits = logits - config.lr_policy * grad
        if it % config.log_every == 0 or it == config.steps - 1:
            loss, _ = policy_loss_grad(softmax(logits, axis=1), problem, batch, ones)
            history.append(
                iteration=it, dual_objective=nan, policy_loss=loss, tau=nan,
                mean_weight=1.0, max_weight=1.0, balance_residual=nan,
            )
    return SoftmaxPolicy(logits), history
