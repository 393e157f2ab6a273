"""Brute-force certificates for the robust formulation.

Everything here is deliberately independent of the training code paths
that it checks: the inner maximization is solved in the primal (over
triplet occupancies) with SLSQP, the kernel ambiguity set is
searched directly on a lattice, and the closed-form weights are compared to
a grid search. Each ``verify_*`` function returns a :class:`SuiteReport`.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.special import softmax

from .divergence import FGenerator, f_divergence, make_generator, tv_distance
from .mdp import (
    PolicyLike,
    TabularMdp,
    TripletOccupancy,
    as_probs,
    random_mdp,
    random_policy,
    state_action_occupancy,
    state_occupancy,
    triplet_occupancy,
)
from .dataset import generate_dataset
from .robust import DualState, Problem, dual_objective, optimal_weight, state_loss, weighted_policy_loss

MAX_PRIMAL_SIZE = 10_000


class OracleError(RuntimeError):
    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class SuiteReport:
    suite: str
    cases: int = 0
    max_violation: float = 0.0
    failures: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, violation: float, case: dict | None = None) -> None:
        """Count one case; a positive ``violation`` marks it failed."""
        self.cases += 1
        self.max_violation = max(self.max_violation, float(violation))
        if violation > 0 and case is not None:
            self.failures.append(case)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "cases": self.cases,
            "max_violation": self.max_violation,
            "pass": self.passed,
            "failures": self.failures[:10],
            **self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------- ball sampler

# Kernel sampling inside a per-(s, a) TV ball. Each row is moved toward a
# random target distribution q: T = T0 + alpha (q - T0). Since
# TV(T, T0) = alpha TV(q, T0), choosing alpha = min(1, r / TV(q, T0)) lands
# exactly on radius r unless q itself is closer. Every point of the ball is
# of this form (take q = T, alpha = 1), and rows stay nonnegative.

def max_row_tv(kernel: np.ndarray, nominal: np.ndarray) -> float:
    return float(0.5 * np.abs(kernel - nominal).sum(axis=2).max())


def _move_toward(nominal, target, radius):
    gap = 0.5 * np.abs(target - nominal).sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(gap > 0, np.minimum(1.0, radius / gap), 0.0)
    kernel = nominal + alpha[..., None] * (target - nominal)
    kernel = np.clip(kernel, 0.0, None)
    return kernel / kernel.sum(axis=2, keepdims=True)


def _radius_fractions(rng: np.random.Generator, shape) -> np.ndarray:
    # half the rows on the boundary, the rest anywhere inside
    return np.where(rng.random(shape) < 0.5, 1.0, rng.random(shape))


def sample_ball_kernel(
    nominal: np.ndarray,
    rho_prime: float,
    rng: np.random.Generator,
    concentration: float = 0.3,
) -> np.ndarray:
    S, A, _ = nominal.shape
    target = rng.dirichlet(np.full(S, concentration), size=(S, A))
    return _move_toward(nominal, target, rho_prime * _radius_fractions(rng, (S, A)))


@dataclass(frozen=True)
class KernelPool:
    """Reusable random directions; kernels at radius r are reproducible and
    the pools for increasing radii can be merged for nested searches."""

    targets: np.ndarray  # [n, S, A, S]
    fractions: np.ndarray  # [n, S, A]

    @classmethod
    def draw(cls, nominal: np.ndarray, num: int, rng: np.random.Generator, concentration: float = 0.3):
        S, A, _ = nominal.shape
        targets = rng.dirichlet(np.full(S, concentration), size=(num, S, A))
        return cls(targets, _radius_fractions(rng, (num, S, A)))

    def __len__(self) -> int:
        return len(self.targets)

    def kernels(self, nominal: np.ndarray, rho_prime: float):
        for t, frac in zip(self.targets, self.fractions):
            yield _move_toward(nominal, t, rho_prime * frac)


# ------------------------------------------------------------ primal problem

def _balance_system(mdp: TabularMdp, expert: np.ndarray, support):
    """Rows ``(s, a)`` of the balance equation restricted to ``support`` triplets."""
    S, A = mdp.num_states, mdp.num_actions
    s, a, s2 = support
    n = len(s)
    rows = s * A + a
    mat = np.zeros((S * A, n))
    mat[rows, np.arange(n)] += 1.0
    # inflow into state s2 feeds every action row of s2
    mat[(s2[None, :] * A + np.arange(A)[:, None]).ravel(), np.tile(np.arange(n), A)] -= (
        mdp.discount * expert[s2].T
    ).ravel()
    rhs = ((1.0 - mdp.discount) * mdp.initial_dist[:, None] * expert).ravel()
    return mat, rhs


def inner_max_primal(
    mdp: TabularMdp,
    expert_policy: PolicyLike,
    learner_policy: PolicyLike,
    rho: float,
    gen: FGenerator | str,
    tol: float = 1e-6,
    *,
    loss_mode: str = "exact_kl",
    max_weight: float | None = None,
    max_iter: int = 1000,
) -> tuple[TripletOccupancy, float]:
    """Worst-case expected imitation loss over balance-feasible occupancies.

    Maximizes ``E_d[L_pi(s)]`` over triplet measures ``d`` supported on the
    nominal occupancy ``d0``, subject to the balance equation and
    ``D_f(d || d0) <= rho``, with the ratio ``d / d0`` capped at the
    generator's saturation weight as in the closed-form weights (pass
    ``max_weight=np.inf`` to drop the cap). The balance set is parameterized exactly as
    ``d0 + N z`` with ``N`` an orthonormal null-space basis, leaving a
    smooth convex program in ``z`` (nonnegativity plus one divergence
    constraint) for SLSQP. The returned point is pulled toward ``d0`` if
    needed so that it is feasible to machine precision.
    """
    if isinstance(gen, str):
        gen = make_generator(gen)
    expert = as_probs(expert_policy)
    d0 = triplet_occupancy(mdp, expert).mass
    if d0.size > MAX_PRIMAL_SIZE:
        raise ValueError(f"instance too large for the primal oracle ({d0.size} > {MAX_PRIMAL_SIZE})")
    loss = state_loss(expert, as_probs(learner_policy), loss_mode)
    support = np.nonzero(d0 > 0)
    q = d0[support]
    c = loss[support[0]]

    def pack(x):
        mass = np.zeros_like(d0)
        mass[support] = x
        return TripletOccupancy(mass)

    mat, rhs = _balance_system(mdp, expert, support)
    basis = null_space(mat)
    if rho == 0 or basis.shape[1] == 0 or np.ptp(c) == 0:
        return pack(q), float(q @ c)

    cap = gen.saturation_weight if max_weight is None else max_weight
    upper = np.minimum((cap - 1.0) * q, 1e300)
    # ratios are clipped at 0 so probes outside the orthant stay finite
    div = lambda x: float(np.sum(q * gen(np.maximum(x / q, 0.0))))
    ratio = lambda x: np.maximum(x / q, 1e-12)
    cons = [
        {"type": "ineq", "fun": lambda z: q + basis @ z, "jac": lambda z: basis},
        {"type": "ineq", "fun": lambda z: upper - basis @ z, "jac": lambda z: -basis},
        {
            "type": "ineq",
            "fun": lambda z: rho - div(q + basis @ z),
            "jac": lambda z: -(gen.derivative(ratio(q + basis @ z)) @ basis),
        },
    ]
    grad = -(c @ basis)
    res = minimize(
        lambda z: -float(c @ (q + basis @ z)), np.zeros(basis.shape[1]), jac=lambda z: grad,
        method="SLSQP", constraints=cons, options={"maxiter": max_iter, "ftol": tol * 1e-4},
    )
    x = q + basis @ res.x
    if not res.success and res.status != 9:
        raise OracleError(f"primal solver failed: {res.message}", best=(pack(x), float(x @ c)))
    # snap onto the feasible set along the segment toward d0 (which is feasible)
    t = 1.0
    while (np.any(x < 0) or np.any(x > cap * q) or div(x) > rho) and t > 0:
        t *= 0.999
        x = q + t * basis @ res.x
    violation = float(np.max(np.abs(mat @ x - rhs)))
    if violation > 10 * tol:
        raise OracleError(f"balance violation {violation:.2e} exceeds {10 * tol:.0e}", best=(pack(x), float(x @ c)))
    return pack(x), float(x @ c)


# -------------------------------------------------------------- dual problem

def _policy_evaluation_q(mdp: TabularMdp, expert: np.ndarray, loss: np.ndarray) -> np.ndarray:
    """``Q(s, a) = L(s) + gamma E_{s', a'} Q(s', a')`` under the expert."""
    S, A = mdp.num_states, mdp.num_actions
    # P[(s,a), (s',a')] = T(s'|s,a) pi_D(a'|s')
    trans = (mdp.kernel[:, :, :, None] * expert[None, None, :, :]).reshape(S * A, S * A)
    rhs = np.repeat(loss, A)
    return np.linalg.solve(np.eye(S * A) - mdp.discount * trans, rhs).reshape(S, A)


def minimize_dual(
    mdp: TabularMdp,
    expert_policy: PolicyLike,
    learner_policy: PolicyLike,
    rho: float,
    gen: FGenerator | str,
    *,
    loss_mode: str = "exact_kl",
    max_iter: int = 20_000,
) -> tuple[DualState, float]:
    """Minimize the exact-mode dual objective over ``(Q, tau)`` with L-BFGS-B."""
    if isinstance(gen, str):
        gen = make_generator(gen)
    expert = as_probs(expert_policy)
    probs = as_probs(learner_policy)
    problem = Problem.exact(mdp, expert, loss_mode)
    samples = problem.samples()
    S, A = mdp.num_states, mdp.num_actions
    loss = state_loss(expert, probs, loss_mode)

    def fun(x):
        dual = DualState(x[:-1].reshape(S, A), max(x[-1], 1e-4))
        ev = dual_objective(dual, probs, problem, gen, rho, samples=samples)
        return ev.value, np.append(ev.grad_q.ravel(), ev.grad_tau)

    q0 = _policy_evaluation_q(mdp, expert, loss)
    tau0 = 4.0 * float(np.max(np.abs(loss))) + 1.0
    bounds = [(None, None)] * (S * A) + [(1e-4, None)]
    lbfgs = lambda x: minimize(
        fun, x, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": max_iter, "maxfun": 4 * max_iter, "ftol": 1e-15, "gtol": 1e-10},
    )
    res = lbfgs(np.append(q0.ravel(), tau0))
    # L-BFGS stalls where scores sit on a kink of the capped weight map;
    # a derivative-free pass moves along the kink, then L-BFGS finishes.
    polish = minimize(
        lambda x: fun(x)[0], res.x, method="Nelder-Mead", bounds=bounds,
        options={"maxiter": 100 * len(res.x) ** 2, "xatol": 1e-12, "fatol": 1e-14, "adaptive": True},
    )
    if polish.fun < res.fun:
        res = lbfgs(polish.x)
        if polish.fun < res.fun:
            res = polish
    dual = DualState(res.x[:-1].reshape(S, A), max(res.x[-1], 1e-4))
    return dual, float(res.fun)


@dataclass(frozen=True)
class DualityGap:
    gap: float
    primal: float
    dual: float


def duality_gap(
    mdp: TabularMdp,
    expert_policy: PolicyLike,
    learner_policy: PolicyLike,
    rho: float,
    gen: FGenerator | str,
    *,
    loss_mode: str = "exact_kl",
    tol: float = 1e-6,
) -> DualityGap:
    _, primal = inner_max_primal(mdp, expert_policy, learner_policy, rho, gen, tol, loss_mode=loss_mode)
    _, dual = minimize_dual(mdp, expert_policy, learner_policy, rho, gen, loss_mode=loss_mode)
    return DualityGap(abs(primal - dual), primal, dual)


# ------------------------------------------------------ kernel lattice search

def _lattice_moves(num_states: int, steps: int) -> np.ndarray:
    """Integer vectors ``k`` with ``sum k = 0`` and ``sum |k| <= 2 steps``."""
    rng = range(-steps, steps + 1)
    moves = [k for k in itertools.product(rng, repeat=num_states)
             if sum(k) == 0 and sum(map(abs, k)) <= 2 * steps]
    return np.asarray(moves, dtype=float)


def inner_max_kernel_grid(
    mdp: TabularMdp,
    expert_policy: PolicyLike,
    learner_policy: PolicyLike,
    rho_prime: float,
    grid_resolution: int = 4,
    *,
    loss_mode: str = "exact_kl",
    max_sweeps: int = 50,
) -> tuple[np.ndarray, float]:
    """Coordinate ascent over lattice perturbations of each kernel row.

    Row ``(s, a)`` may move by any multiple of ``rho_prime / grid_resolution``
    per entry that keeps it a distribution within TV ``rho_prime`` of the
    nominal row. Every visited kernel is feasible, so the value is a
    certified lower bound on the kernel-set maximum.
    """
    S, A = mdp.num_states, mdp.num_actions
    if S > 4 or A > 2:
        raise ValueError("kernel grid search is limited to S <= 4, A <= 2")
    expert = as_probs(expert_policy)
    loss = state_loss(expert, as_probs(learner_policy), loss_mode)
    nominal = mdp.kernel
    value_of = lambda k: float(state_occupancy(mdp.with_kernel(k), expert) @ loss)
    best_kernel, best = nominal.copy(), value_of(nominal)
    if rho_prime == 0 or S == 1:
        return best_kernel, best

    moves = _lattice_moves(S, grid_resolution) * (rho_prime / grid_resolution)
    for _ in range(max_sweeps):
        improved = False
        for s, a in itertools.product(range(S), range(A)):
            rows = nominal[s, a] + moves
            ok = np.all(rows >= 0, axis=1)
            for row in rows[ok]:
                cand = best_kernel.copy()
                cand[s, a] = row / row.sum()
                val = value_of(cand)
                if val > best + 1e-14:
                    best_kernel, best, improved = cand, val, True
        if not improved:
            break
    return best_kernel, best


# ------------------------------------------------------------ lemma checks

def occupancy_tv_bounds(rho_prime: float, discount: float) -> dict:
    """TV bounds for triplet, state-action and state occupancies under a
    per-row kernel shift of ``rho_prime``."""
    triplet = rho_prime / (1.0 - discount)
    return {"triplet": triplet, "state_action": discount * triplet, "state": discount * triplet}


def verify_occupancy_tv_bounds(
    mdp: TabularMdp,
    policy: PolicyLike,
    rho_prime: float,
    num_samples: int,
    rng: np.random.Generator,
    *,
    atol: float = 1e-10,
) -> SuiteReport:
    """Sample kernels in the TV ball and check the occupancy TV bounds.

    Violation of a case is the largest excess over a bound or over the
    marginal ordering ``state <= state_action <= triplet``. The report's
    ``max_ratio`` is the largest observed distance divided by its bound.
    """
    probs = as_probs(policy)
    bounds = occupancy_tv_bounds(rho_prime, mdp.discount)
    report = SuiteReport("occupancy_tv_bounds", details={"bounds": bounds, "max_ratio": 0.0})
    d_trip = triplet_occupancy(mdp, probs).mass
    d_sa = state_action_occupancy(mdp, probs)
    d_s = state_occupancy(mdp, probs)
    for _ in range(num_samples):
        kernel = sample_ball_kernel(mdp.kernel, rho_prime, rng)
        shifted = mdp.with_kernel(kernel)
        dist = {
            "triplet": tv_distance(triplet_occupancy(shifted, probs).mass, d_trip),
            "state_action": tv_distance(state_action_occupancy(shifted, probs), d_sa),
            "state": tv_distance(state_occupancy(shifted, probs), d_s),
        }
        excess = [dist[k] - bounds[k] for k in bounds]
        excess += [dist["state"] - dist["state_action"], dist["state_action"] - dist["triplet"]]
        violation = max(0.0, max(excess) - atol)
        for k in bounds:
            if bounds[k] > 0:
                report.details["max_ratio"] = max(report.details["max_ratio"], dist[k] / bounds[k])
        report.record(violation, {"distances": dist, "kernel": kernel.tolist()})
    return report


def grid_argmax_weight(gen: FGenerator, e: float, tau: float, points: int = 10_000) -> float:
    """Maximize ``w -> -tau f(w) + w e`` on a grid over ``[0, saturation_weight]``,
    then again on a fine grid around the coarse winner."""
    cap = gen.saturation_weight
    obj = lambda w: -tau * gen(w) + w * e
    coarse = np.linspace(0.0, cap, points)
    i = int(np.argmax(obj(coarse)))
    h = coarse[1] - coarse[0]
    fine = np.linspace(max(0.0, coarse[i] - h), min(cap, coarse[i] + h), points)
    return float(fine[int(np.argmax(obj(fine)))])


def verify_prop1_scalar(
    gen: FGenerator | str,
    num_cases: int,
    rng: np.random.Generator,
    *,
    resolution: float = 1e-3,
    points: int = 10_000,
) -> SuiteReport:
    """Closed-form weights against a grid search of the scalar inner problem."""
    if isinstance(gen, str):
        gen = make_generator(gen)
    report = SuiteReport(f"prop1_{gen.name}", details={"resolution": resolution})
    for _ in range(num_cases):
        tau = float(np.exp(rng.uniform(np.log(0.05), np.log(10.0))))
        # scaled scores concentrated where the weight map is nontrivial
        z = float(rng.uniform(-3.0, 3.0) if gen.name != "soft_tv" else rng.uniform(-0.6, 0.6))
        e = z * tau
        w_closed = optimal_weight(gen, e, tau)
        w_grid = grid_argmax_weight(gen, e, tau, points)
        err = abs(w_closed - w_grid)
        report.record(max(0.0, err - resolution), {"e": e, "tau": tau, "closed": w_closed, "grid": w_grid})
        report.details["max_abs_diff"] = max(report.details.get("max_abs_diff", 0.0), err)
    return report


def verify_generator_dominance(
    num_points: int,
    num_pairs: int,
    rng: np.random.Generator,
    *,
    support: int = 6,
) -> SuiteReport:
    """``f_soft_tv <= f_tv`` pointwise on ``[0, 50]`` and ``D_soft_tv <= TV``
    on random distribution pairs."""
    soft, hard = make_generator("soft_tv"), make_generator("tv")
    report = SuiteReport("generator_dominance")
    xs = np.linspace(0.0, 50.0, num_points)
    excess = soft(xs) - hard(xs)
    for x, ex in zip(xs[excess > 0], excess[excess > 0]):
        report.failures.append({"x": float(x), "excess": float(ex)})
    report.cases += num_points
    report.max_violation = max(0.0, float(excess.max()))
    for _ in range(num_pairs):
        p = rng.dirichlet(np.full(support, 0.5))
        q = rng.dirichlet(np.full(support, 0.5))
        gap = f_divergence(soft, p, q) - tv_distance(p, q)
        report.record(max(0.0, gap), {"p": p.tolist(), "q": q.tolist()})
    return report


# ------------------------------------------------------------- instance suites

def random_instance(num_states: int, num_actions: int, discount: float, rng: np.random.Generator):
    """Full-support random MDP with random expert and learner policies."""
    mdp = random_mdp(num_states, num_actions, discount, rng, concentration=1.0)
    expert = random_policy(num_states, num_actions, rng)
    learner = random_policy(num_states, num_actions, rng)
    return mdp, expert, learner


def verify_duality(
    rng: np.random.Generator,
    *,
    num_instances: int = 10,
    rhos=(0.0, 0.05, 0.1),
    generator: str = "soft_tv",
    gap_tol: float = 1e-2,
    weak_tol: float = 1e-3,
) -> SuiteReport:
    report = SuiteReport("duality", details={"max_gap": 0.0})
    for i in range(num_instances):
        discount = float(rng.uniform(0.5, 0.9))
        mdp, expert, learner = random_instance(3, 2, discount, rng)
        for rho in rhos:
            res = duality_gap(mdp, expert, learner, rho, generator)
            violation = max(res.gap - gap_tol, res.primal - res.dual - weak_tol, 0.0)
            report.details["max_gap"] = max(report.details["max_gap"], res.gap)
            report.record(violation, {"instance": i, "rho": rho, "primal": res.primal, "dual": res.dual})
    return report


def verify_relaxation_sandwich(
    rng: np.random.Generator,
    *,
    num_instances: int = 20,
    rho_prime: float = 0.02,
    generator: str = "soft_tv",
    grid_resolution: int = 3,
    tol: float = 1e-6,
) -> SuiteReport:
    """Kernel-set lattice value <= occupancy-set primal value at radius
    ``rho_prime / (1 - gamma)``."""
    report = SuiteReport("relaxation_sandwich", details={"max_relaxation_gap": 0.0})
    for i in range(num_instances):
        discount = float(rng.uniform(0.5, 0.9))
        num_states = int(rng.integers(2, 4))
        mdp, expert, learner = random_instance(num_states, 2, discount, rng)
        _, grid_value = inner_max_kernel_grid(mdp, expert, learner, rho_prime, grid_resolution)
        rho = rho_prime / (1.0 - discount)
        _, primal = inner_max_primal(mdp, expert, learner, rho, generator, tol)
        report.details["max_relaxation_gap"] = max(report.details["max_relaxation_gap"], primal - grid_value)
        report.record(max(0.0, grid_value - primal - tol), {"instance": i, "grid": grid_value, "primal": primal})
    return report


def gradient_errors(
    problem: Problem,
    gen: FGenerator,
    rho: float,
    dual: DualState,
    logits: np.ndarray,
    h: float = 1e-5,
) -> tuple[float, float]:
    """Relative errors of the analytic gradients against central differences.

    Returns ``(dual_error, policy_error)``, each ``max|fd - grad| / max|grad|``.
    The dual objective is re-evaluated with fresh weights at every probe; the
    policy loss keeps the weights of the base point fixed.
    """
    samples = problem.samples()
    probs = softmax(logits, axis=1)
    ev = dual_objective(dual, probs, problem, gen, rho, samples=samples)
    value = lambda d: dual_objective(d, probs, problem, gen, rho, samples=samples).value
    fd_q = np.zeros_like(ev.grad_q)
    for idx in np.ndindex(*fd_q.shape):
        bump = np.zeros_like(fd_q)
        bump[idx] = h
        up = DualState(dual.q_table + bump, dual.tau, dual.tau_min)
        down = DualState(dual.q_table - bump, dual.tau, dual.tau_min)
        fd_q[idx] = (value(up) - value(down)) / (2 * h)
    fd_tau = (
        value(DualState(dual.q_table, dual.tau + h, dual.tau_min))
        - value(DualState(dual.q_table, dual.tau - h, dual.tau_min))
    ) / (2 * h)
    analytic = np.append(ev.grad_q.ravel(), ev.grad_tau)
    numeric = np.append(fd_q.ravel(), fd_tau)
    dual_err = float(np.max(np.abs(numeric - analytic)) / max(np.max(np.abs(analytic)), 1e-12))

    weights = ev.weights
    loss = lambda x: weighted_policy_loss(x, dual, problem, gen, samples=samples, weights=weights)[0]
    _, grad = weighted_policy_loss(logits, dual, problem, gen, samples=samples, weights=weights)
    fd = np.zeros_like(grad)
    for idx in np.ndindex(*grad.shape):
        bump = np.zeros_like(grad)
        bump[idx] = h
        fd[idx] = (loss(logits + bump) - loss(logits - bump)) / (2 * h)
    policy_err = float(np.max(np.abs(fd - grad)) / max(np.max(np.abs(grad)), 1e-12))
    return dual_err, policy_err


def random_gradient_case(rng: np.random.Generator, index: int = 0):
    """A random problem with random dual and policy parameters.

    Even ``index`` gives an exact-mode problem with the KL loss, odd gives a
    dataset problem with the per-sample likelihood loss; the generator cycles
    through the smooth ones.
    """
    S, A = int(rng.integers(2, 6)), int(rng.integers(2, 4))
    discount = float(rng.uniform(0.5, 0.95))
    mdp = random_mdp(S, A, discount, rng)
    expert = random_policy(S, A, rng)
    if index % 2 == 0:
        problem = Problem.exact(mdp, expert, "exact_kl")
    else:
        data = generate_dataset(mdp, expert, 10, 8, int(rng.integers(2**31)))
        problem = Problem.from_dataset(data, discount, None, "sample_nll")
    gen = make_generator(("soft_tv", "kl", "chi2", "soft_chi2")[index % 4])
    dual = DualState(rng.normal(size=(S, A)), float(rng.uniform(0.5, 3.0)))
    logits = rng.normal(size=(S, A))
    return problem, gen, float(rng.uniform(0.0, 0.2)), dual, logits


def verify_gradients(
    rng: np.random.Generator,
    *,
    num_instances: int = 20,
    rel_tol: float = 1e-4,
) -> SuiteReport:
    """Central-difference checks of the dual and policy gradients."""
    report = SuiteReport("gradients", details={"max_dual_error": 0.0, "max_policy_error": 0.0})
    for i in range(num_instances):
        problem, gen, rho, dual, logits = random_gradient_case(rng, i)
        dual_err, policy_err = gradient_errors(problem, gen, rho, dual, logits)
        report.details["max_dual_error"] = max(report.details["max_dual_error"], dual_err)
        report.details["max_policy_error"] = max(report.details["max_policy_error"], policy_err)
        worst = max(dual_err, policy_err)
        report.record(max(0.0, worst - rel_tol), {"instance": i, "generator": gen.name,
                                                  "dual_error": dual_err, "policy_error": policy_err})
    return report


SUITES = ("tv_bounds", "prop1", "dominance", "duality", "sandwich")


def run_suite(name: str, seed: int, *, quick: bool = False) -> SuiteReport:
    """Run one named verification suite at its acceptance settings.

    ``quick`` shrinks sample counts for smoke tests.
    """
    rng = np.random.default_rng(seed)
    if name == "tv_bounds":
        report = SuiteReport("tv_bounds", details={"max_ratio": 0.0})
        samples = 50 if quick else 1000
        for discount in (0.5, 0.9, 0.99):
            for rho_prime in (0.05, 0.1, 0.2):
                for _ in range(2 if quick else 5):
                    S, A = int(rng.integers(2, 7)), int(rng.integers(1, 4))
                    mdp = random_mdp(S, A, discount, rng)
                    policy = random_policy(S, A, rng)
                    sub = verify_occupancy_tv_bounds(mdp, policy, rho_prime, samples, rng)
                    report.cases += sub.cases
                    report.max_violation = max(report.max_violation, sub.max_violation)
                    report.failures += sub.failures
                    report.details["max_ratio"] = max(report.details["max_ratio"], sub.details["max_ratio"])
        return report
    if name == "prop1":
        report = SuiteReport("prop1", details={"max_abs_diff": 0.0})
        for gen in ("soft_tv", "kl", "chi2", "soft_chi2"):
            sub = verify_prop1_scalar(gen, 50 if quick else 1000, rng)
            report.cases += sub.cases
            report.max_violation = max(report.max_violation, sub.max_violation)
            report.failures += sub.failures
            report.details["max_abs_diff"] = max(report.details["max_abs_diff"], sub.details["max_abs_diff"])
        return report
    if name == "dominance":
        return verify_generator_dominance(10_000 if quick else 100_000, 100 if quick else 1000, rng)
    if name == "duality":
        return verify_duality(rng, num_instances=2 if quick else 10)
    if name == "sandwich":
        return verify_relaxation_sandwich(rng, num_instances=3 if quick else 20)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES} or 'all'")
