from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bedroil.mdp import (
    MdpError,
    SoftmaxPolicy,
    StochasticPolicy,
    TabularMdp,
    balance_residual,
    load_mdp,
    random_mdp,
    random_policy,
    sample_trajectory,
    save_mdp,
    state_occupancy,
    triplet_occupancy,
    validate_mdp,
)


def chain_mdp(gamma=0.5):
    kernel = np.zeros((2, 1, 2))
    kernel[0, 0, 1] = kernel[1, 0, 1] = 1.0
    return TabularMdp(2, 1, kernel, [1.0, 0.0], gamma)


def single_state_mdp():
    return TabularMdp(1, 1, [[[1.0]]], [1.0], 0.9)


mdp_seeds = st.integers(0, 2**32 - 1)
sizes = st.tuples(st.integers(1, 6), st.integers(1, 3))


# ------------------------------------------------------------- validation

def test_validate_degenerate_mdp_ok():
    validate_mdp(single_state_mdp())


def test_validate_bad_row_names_state_action():
    kernel = np.array([[[0.5, 0.5], [0.49, 0.49]], [[1.0, 0.0], [0.0, 1.0]]])
    with pytest.raises(MdpError, match=r"s=0, a=1.*0\.98"):
        validate_mdp(TabularMdp(2, 2, kernel, [0.5, 0.5], 0.9))


@pytest.mark.parametrize("gamma", [1.0, 0.0, -0.1, 1.5])
def test_validate_discount_out_of_range(gamma):
    with pytest.raises(MdpError, match="discount out of range"):
        validate_mdp(TabularMdp(1, 1, [[[1.0]]], [1.0], gamma))


def test_validate_initial_dist():
    with pytest.raises(MdpError, match="initial_dist"):
        validate_mdp(TabularMdp(2, 1, np.ones((2, 1, 2)) / 2, [0.7, 0.7], 0.9))


def test_validate_negative_entry():
    kernel = np.array([[[1.5, -0.5]], [[0.0, 1.0]]])
    with pytest.raises(MdpError, match="negative"):
        validate_mdp(TabularMdp(2, 1, kernel, [1.0, 0.0], 0.9))


def test_mdp_json_roundtrip(tmp_path):
    mdp = random_mdp(4, 2, 0.8, np.random.default_rng(0))
    save_mdp(mdp, tmp_path / "m.json")
    back = load_mdp(tmp_path / "m.json")
    assert np.array_equal(back.kernel, mdp.kernel)
    assert np.array_equal(back.initial_dist, mdp.initial_dist)
    assert back.discount == mdp.discount


def test_load_mdp_missing_field(tmp_path):
    (tmp_path / "m.json").write_text('{"num_states": 1}')
    with pytest.raises(MdpError, match="missing"):
        load_mdp(tmp_path / "m.json")


def test_policies_validate_and_materialize():
    with pytest.raises(MdpError):
        StochasticPolicy([[0.6, 0.6]])
    pol = SoftmaxPolicy(np.array([[0.0, np.log(3.0)]])).materialize()
    assert np.allclose(pol.probs, [[0.25, 0.75]])


# ------------------------------------------------------------- occupancy

def test_single_state_occupancy():
    mdp = single_state_mdp()
    assert np.allclose(state_occupancy(mdp, [[1.0]]), [1.0])
    assert np.allclose(triplet_occupancy(mdp, [[1.0]]).mass, [[[1.0]]])


def test_chain_occupancy_by_hand():
    mdp = chain_mdp(0.5)
    assert np.allclose(state_occupancy(mdp, [[1.0], [1.0]]), [0.5, 0.5], atol=1e-15)
    mass = triplet_occupancy(mdp, [[1.0], [1.0]]).mass
    expected = np.zeros((2, 1, 2))
    expected[0, 0, 1] = expected[1, 0, 1] = 0.5
    assert np.allclose(mass, expected, atol=1e-15)


def test_state_occupancy_matches_monte_carlo():
    rng = np.random.default_rng(1)
    mdp = random_mdp(5, 2, 0.8, rng)
    pol = random_policy(5, 2, rng)
    exact = state_occupancy(mdp, pol)
    # the state before the last action sits at a geometric time, i.e. is an exact draw from d
    n = 100_000
    hits = np.zeros(5)
    sim_rng = np.random.default_rng(2)
    for _ in range(n):
        traj = sample_trajectory(mdp, pol, sim_rng, geometric=True)
        hits[traj.states[-2]] += 1
    est = hits / n
    se = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(est - exact) <= 3 * se + 1e-12)


@settings(max_examples=100, deadline=None)
@given(mdp_seeds, sizes, st.floats(0.05, 0.99))
def test_triplet_occupancy_invariants(seed, size, gamma):
    S, A = size
    rng = np.random.default_rng(seed)
    mdp = random_mdp(S, A, gamma, rng, concentration=0.5)
    pol = random_policy(S, A, rng)
    occ = triplet_occupancy(mdp, pol)
    assert np.all(occ.mass >= 0)
    assert abs(occ.mass.sum() - 1) <= 1e-8
    assert balance_residual(occ, pol, mdp.initial_dist, gamma) <= 1e-8
    assert np.allclose(occ.state, state_occupancy(mdp, pol), atol=1e-10)
    assert np.allclose(occ.state_action.sum(axis=1), occ.state, atol=1e-12)


def test_balance_residual_uniform_mass_is_large():
    rng = np.random.default_rng(3)
    mdp = TabularMdp(2, 2, rng.dirichlet(np.ones(2), size=(2, 2)), [0.9, 0.1], 0.9)
    pol = np.full((2, 2), 0.5)
    assert balance_residual(np.full((2, 2, 2), 1 / 8), pol, mdp.initial_dist, 0.9) > 0.01


@settings(max_examples=50, deadline=None)
@given(mdp_seeds, sizes)
def test_balance_residual_is_kernel_free(seed, size):
    S, A = size
    rng = np.random.default_rng(seed)
    mdp = random_mdp(S, A, 0.9, rng)
    pol = random_policy(S, A, rng)
    shifted = mdp.with_kernel(rng.dirichlet(np.ones(S), size=(S, A)))
    occ = triplet_occupancy(shifted, pol)
    assert balance_residual(occ, pol, mdp.initial_dist, 0.9) <= 1e-8


# ------------------------------------------------------------- sampling

def test_deterministic_path():
    mdp = chain_mdp()
    traj = sample_trajectory(mdp, [[1.0], [1.0]], np.random.default_rng(0), 3)
    assert traj.states == [0, 1, 1, 1]
    assert traj.actions == [0, 0, 0]


def test_geometric_mean_length():
    mdp = random_mdp(3, 2, 0.9, np.random.default_rng(0))
    pol = np.full((3, 2), 0.5)
    rng = np.random.default_rng(5)
    lengths = np.array([len(sample_trajectory(mdp, pol, rng, geometric=True)) for _ in range(10_000)])
    se = lengths.std(ddof=1) / np.sqrt(len(lengths))
    assert abs(lengths.mean() - 10.0) <= 3 * se


def test_sampling_is_deterministic_per_seed():
    mdp = random_mdp(4, 3, 0.9, np.random.default_rng(0))
    pol = random_policy(4, 3, np.random.default_rng(1))
    a = sample_trajectory(mdp, pol, np.random.default_rng(9), 25)
    b = sample_trajectory(mdp, pol, np.random.default_rng(9), 25)
    assert a.to_record() == b.to_record()


def test_horizon_arguments_are_exclusive():
    with pytest.raises(ValueError):
        sample_trajectory(chain_mdp(), [[1.0], [1.0]], np.random.default_rng(0))
