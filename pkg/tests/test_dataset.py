from __future__ import annotations

import numpy as np
import pytest

from bedroil.dataset import (
    Dataset,
    DatasetError,
    effective_initial_states,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from bedroil.mdp import Trajectory, random_mdp, random_policy


@pytest.fixture
def small():
    rng = np.random.default_rng(0)
    mdp = random_mdp(4, 2, 0.9, rng)
    return mdp, random_policy(4, 2, rng)


def test_single_transition(small):
    mdp, pol = small
    ds = generate_dataset(mdp, pol, 1, 1, seed=0)
    assert len(ds.transitions) == 1
    assert ds.transitions.next_actions.tolist() == [-1]


def test_transition_arrays_follow_trajectories():
    ds = Dataset((Trajectory([0, 1, 2], [1, 0]),), 3, 2)
    tr = ds.transitions
    assert tr.states.tolist() == [0, 1]
    assert tr.actions.tolist() == [1, 0]
    assert tr.next_states.tolist() == [1, 2]
    assert tr.next_actions.tolist() == [0, -1]


def test_indices_in_range(small):
    mdp, pol = small
    ds = generate_dataset(mdp, pol, 50, 7, seed=3)
    tr = ds.transitions
    assert tr.states.max() < 4 and tr.next_states.max() < 4 and tr.actions.max() < 2
    assert all(len(t.states) == len(t.actions) + 1 for t in ds.trajectories)


def test_out_of_range_rejected():
    with pytest.raises(DatasetError, match="out of range"):
        Dataset((Trajectory([0, 5], [0]),), 3, 1)


def test_empirical_frequencies_match_windowed_occupancy(small):
    mdp, pol = small
    horizon, n = 5, 10_000
    ds = generate_dataset(mdp, pol, n, horizon, seed=11)
    # distribution of s_t for t < horizon, weighted uniformly over t
    dist = mdp.initial_dist.copy()
    P = np.einsum("sa,sat->st", pol, mdp.kernel)
    window = np.zeros(4)
    for _ in range(horizon):
        window += dist / horizon
        dist = dist @ P
    expected = window[:, None] * pol
    freq = ds.state_action_counts() / (n * horizon)
    # steps within a trajectory are dependent; trajectories are the i.i.d. unit
    per_traj = np.zeros((n, 4, 2))
    for i, t in enumerate(ds.trajectories):
        np.add.at(per_traj[i], (t.states[:-1], t.actions), 1.0 / horizon)
    se = per_traj.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(freq - expected) <= 3 * se + 1e-12)


def test_fixed_seed_gives_identical_files(small, tmp_path):
    mdp, pol = small
    save_dataset(generate_dataset(mdp, pol, 20, 10, seed=5), tmp_path / "a.jsonl")
    save_dataset(generate_dataset(mdp, pol, 20, 10, seed=5), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_round_trip(small, tmp_path):
    mdp, pol = small
    ds = generate_dataset(mdp, pol, 12, 6, seed=1)
    save_dataset(ds, tmp_path / "d.jsonl")
    assert load_dataset(tmp_path / "d.jsonl", 4, 2) == ds


def test_missing_actions_reports_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"states":[0,1],"actions":[0]}\n{"states":[0]}\n')
    with pytest.raises(DatasetError, match="line 2: record missing 'actions'"):
        load_dataset(path)


@pytest.mark.parametrize(
    "line, message",
    [
        ("not json", "invalid JSON"),
        ("[1, 2]", "must be an object"),
        ('{"states":[0,1],"actions":[0],"x":1}', "unexpected keys"),
        ('{"states":[0,1,2],"actions":[0]}', "len\\(states\\)"),
        ('{"states":[0,-1],"actions":[0]}', "nonnegative ints"),
        ('{"states":[0,1.5],"actions":[0]}', "nonnegative ints"),
    ],
)
def test_malformed_records(tmp_path, line, message):
    path = tmp_path / "d.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(DatasetError, match=f"line 1: .*{message}"):
        load_dataset(path)


def test_empty_file_warns(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("")
    with pytest.warns(UserWarning, match="empty dataset"):
        ds = load_dataset(path)
    assert len(ds) == 0


def test_sizes_inferred_from_indices(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"states":[0,3],"actions":[2]}\n')
    ds = load_dataset(path)
    assert (ds.num_states, ds.num_actions) == (4, 3)


def test_effective_initial_states_counts_visits():
    ds = Dataset((Trajectory([0, 1, 1], [0, 0]),), 2, 1)
    assert np.allclose(effective_initial_states(ds), [1 / 3, 2 / 3])


def test_effective_initial_states_skips_empty():
    ds = Dataset((Trajectory([1], []), Trajectory([0, 0], [0])), 2, 1)
    with pytest.warns(UserWarning, match="empty trajectory"):
        dist = effective_initial_states(ds)
    assert np.allclose(dist, [1.0, 0.0])


def test_effective_initial_states_rejects_all_empty():
    with pytest.raises(DatasetError):
        with pytest.warns(UserWarning):
            effective_initial_states(Dataset((Trajectory([1], []),), 2, 1))


def test_horizon_one_effective_states():
    rng = np.random.default_rng(4)
    mdp = random_mdp(3, 2, 0.5, rng)
    pol = random_policy(3, 2, rng)
    ds = generate_dataset(mdp, pol, 4000, 1, seed=2)
    # horizon 1: visited states are s0 ~ mu and s1, i.e. mu and mu P equally
    P = np.einsum("sa,sat->st", pol, mdp.kernel)
    expected = 0.5 * (mdp.initial_dist + mdp.initial_dist @ P)
    assert np.allclose(effective_initial_states(ds), expected, atol=0.03)
