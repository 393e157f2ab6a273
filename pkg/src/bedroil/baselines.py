"""Reference learners sharing the solver's configuration and batch schedule."""

from __future__ import annotations

from dataclasses import replace

from .mdp import SoftmaxPolicy
from .robust import Problem
from .solver import SolverConfig, TrainingHistory, train_bc, train_bedroil

BASELINES = ("bc", "bedroil_rho0")


def run_baseline(name: str, problem: Problem, config: SolverConfig) -> tuple[SoftmaxPolicy, TrainingHistory]:
    """``bc``: unweighted imitation. ``bedroil_rho0``: the full alternating
    solver with the divergence radius set to zero."""
    if name == "bc":
        return train_bc(problem, config)
    if name == "bedroil_rho0":
        policy, _, history = train_bedroil(problem, replace(config, rho=0.0))
        return policy, history
    raise ValueError(f"unknown baseline {name!r}; choose from {BASELINES}")
