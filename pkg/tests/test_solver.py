from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from bedroil.baselines import BASELINES, run_baseline
from bedroil.dataset import Dataset, effective_initial_states, generate_dataset
from bedroil.divergence import make_generator
from bedroil.experiment import resolve_config, train_seed
from bedroil.mdp import Trajectory, as_probs, random_mdp, random_policy
from bedroil.oracle import gradient_errors
from bedroil.robust import DualState, Problem, kl_per_state
from bedroil.solver import (
    HISTORY_COLUMNS,
    SolverConfig,
    TrainingDivergedError,
    train_bc,
    train_bedroil,
)


@pytest.fixture(scope="module")
def two_state():
    rng = np.random.default_rng(0)
    mdp = random_mdp(2, 2, 0.9, rng)
    return mdp, random_policy(2, 2, rng)


def fast_config(**kw):
    base = dict(rho=0.0, lr_dual=0.5, lr_policy=0.5, steps=3000, log_every=100)
    base.update(kw)
    return SolverConfig(**base)


def test_rho_zero_recovers_expert(two_state):
    mdp, expert = two_state
    policy, dual, _ = train_bedroil(Problem.exact(mdp, expert), fast_config())
    assert kl_per_state(expert, as_probs(policy)).max() <= 1e-3
    assert dual.tau >= dual.tau_min


def test_bc_recovers_expert(two_state):
    mdp, expert = two_state
    policy, history = train_bc(Problem.exact(mdp, expert), fast_config())
    assert kl_per_state(expert, as_probs(policy)).max() <= 1e-3
    assert np.isnan(history.array("tau")).all()


def test_bc_equals_bedroil_with_unit_weights(two_state):
    mdp, expert = two_state
    problem = Problem.exact(mdp, expert)
    cfg = fast_config(rho=0.1, steps=300, log_every=1)
    pol_bc, hist_bc = train_bc(problem, cfg)
    pol_w, _, hist_w = train_bedroil(problem, cfg, force_unit_weights=True)
    assert np.allclose(hist_bc.array("policy_loss"), hist_w.array("policy_loss"), atol=1e-9, rtol=0)
    assert np.allclose(pol_bc.logits, pol_w.logits, atol=1e-9)


@pytest.mark.parametrize("trainer", ["bedroil", "bc"])
def test_fixed_seed_is_bit_identical(two_state, trainer):
    mdp, expert = two_state
    ds = generate_dataset(mdp, expert, 10, 10, seed=0)
    problem = Problem.from_dataset(ds, 0.9)
    cfg = fast_config(rho=0.1, steps=200, batch_size=16, loss_mode="sample_nll", log_every=1)
    run = (lambda: train_bedroil(problem, cfg)[-1]) if trainer == "bedroil" else (lambda: train_bc(problem, cfg)[-1])
    assert run().to_csv() == run().to_csv()


def test_history_schema(two_state):
    mdp, expert = two_state
    problem = Problem.exact(mdp, expert)
    cfg = fast_config(rho=0.1, steps=95, log_every=10)
    _, _, hist = train_bedroil(problem, cfg)
    assert hist.iteration == list(range(0, 95, 10)) + [94]
    assert hist.to_csv().splitlines()[0] == ",".join(HISTORY_COLUMNS)
    _, bc_hist = train_bc(problem, cfg)
    assert len(bc_hist) == len(hist)


def test_tau_floor_and_weight_range(two_state):
    mdp, expert = two_state
    problem = Problem.exact(mdp, expert, "exact_kl")
    cfg = fast_config(rho=0.3, steps=500, log_every=1, tau_init=0.01, tau_min=1e-3, saturation_weight=50.0)
    _, _, hist = train_bedroil(problem, cfg)
    assert np.all(hist.array("tau") >= 1e-3)
    assert np.all(hist.array("max_weight") <= 50.0)
    assert np.all(hist.array("mean_weight") >= 0.0)


def test_policy_first_order_runs(two_state):
    mdp, expert = two_state
    cfg = fast_config(rho=0.1, steps=50, dual_first=False, update_ratio=(2, 1))
    policy, _, _ = train_bedroil(Problem.exact(mdp, expert), cfg)
    assert np.all(np.isfinite(policy.logits))


def test_nan_aborts_with_snapshot(two_state):
    mdp, expert = two_state
    cfg = fast_config(rho=0.1, steps=50, lr_dual=1e300, lr_policy=1e300)
    with pytest.raises(TrainingDivergedError) as info:
        train_bedroil(Problem.exact(mdp, expert), cfg)
    assert "logits" in info.value.snapshot
    assert info.value.iteration >= 0


def test_loss_mode_mismatch(two_state):
    mdp, expert = two_state
    with pytest.raises(ValueError, match="loss_mode"):
        train_bedroil(Problem.exact(mdp, expert), fast_config(loss_mode="sample_nll"))


@pytest.mark.parametrize(
    "kw",
    [dict(rho=-1.0), dict(lr_dual=0.0), dict(steps=0), dict(generator="tv2"),
     dict(batch_size=0), dict(update_ratio=(1, 0)), dict(tau_init=1e-6)],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_config_dict_round_trip():
    cfg = SolverConfig(rho=0.2, batch_size=32, update_ratio=(2, 1))
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="unknown solver keys"):
        SolverConfig.from_dict({"rho": 0.1, "momentum": 0.9})


def test_effective_initial_states_used_in_sample_mode():
    ds = Dataset((Trajectory([0, 1, 1], [0, 0]),), 2, 1)
    expert = np.ones((2, 1))
    problem = Problem.from_dataset(ds, 0.9, expert, "sample_nll")
    assert np.allclose(problem.samples().init_sa[:, 0], effective_initial_states(ds))


def test_exact_mode_uses_true_initial_distribution(two_state):
    mdp, expert = two_state
    init = Problem.exact(mdp, expert).samples().init_sa
    assert np.allclose(init, mdp.initial_dist[:, None] * expert)


def test_gradient_check_during_training(two_state):
    mdp, expert = two_state
    problem = Problem.exact(mdp, expert)
    gen = make_generator("soft_tv")
    for steps in (1, 250, 500):
        policy, dual, _ = train_bedroil(problem, fast_config(rho=0.1, steps=steps, log_every=1000))
        dual_err, policy_err = gradient_errors(problem, gen, 0.1, dual, policy.logits)
        assert dual_err <= 1e-4 and policy_err <= 1e-4


# ------------------------------------------------------------- gridworld runs

@pytest.fixture(scope="module")
def gridworld_runs():
    cfg = resolve_config({"solver": {"log_every": 1}})
    return {algo: train_seed(cfg, algo, 0) for algo in ("bedroil", "bc", "bedroil_rho0")}


def test_dual_objective_trend(gridworld_runs):
    values = gridworld_runs["bedroil"].history.array("dual_objective")
    smooth = np.convolve(values, np.ones(100) / 100, mode="valid")
    tail = smooth[len(smooth) // 2:]
    # no later value may climb above an earlier one by more than 5% of the level
    climbs = tail - np.minimum.accumulate(tail)
    assert climbs.max() <= 0.05 * abs(tail[0])


def test_rho_zero_close_to_bc(gridworld_runs):
    a = as_probs(gridworld_runs["bedroil_rho0"].policy)
    b = as_probs(gridworld_runs["bc"].policy)
    assert 0.5 * np.abs(a - b).sum(axis=1).max() <= 0.05


def test_baseline_histories_share_schema(gridworld_runs):
    for algo in ("bc", "bedroil_rho0"):
        hist = gridworld_runs[algo].history
        assert set(vars(hist)) == set(HISTORY_COLUMNS) | {"warnings"}


def test_run_baseline_dispatch(two_state):
    mdp, expert = two_state
    problem = Problem.exact(mdp, expert)
    cfg = fast_config(rho=0.3, steps=20)
    for name in BASELINES:
        policy, hist = run_baseline(name, problem, cfg)
        assert len(hist) > 0 and policy.logits.shape == (2, 2)
    rho0, _ = run_baseline("bedroil_rho0", problem, cfg)
    direct, _, _ = train_bedroil(problem, replace(cfg, rho=0.0))
    assert np.array_equal(rho0.logits, direct.logits)
    with pytest.raises(ValueError, match="unknown baseline"):
        run_baseline("drbc", problem, cfg)


def test_baselines_deterministic(two_state):
    mdp, expert = two_state
    ds = generate_dataset(mdp, expert, 5, 10, seed=3)
    problem = Problem.from_dataset(ds, 0.9)
    cfg = fast_config(steps=100, batch_size=8, loss_mode="sample_nll")
    for name in BASELINES:
        a, _ = run_baseline(name, problem, cfg)
        b, _ = run_baseline(name, problem, cfg)
        assert np.array_equal(a.logits, b.logits)


def test_dual_state_validation():
    with pytest.raises(ValueError):
        DualState(np.array([[np.nan]]), 1.0)
    with pytest.raises(ValueError):
        DualState(np.zeros((1, 1)), 1e-6)
