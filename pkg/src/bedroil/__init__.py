"""Balance-constrained distributionally robust imitation on tabular MDPs."""

from .divergence import GENERATOR_NAMES, FGenerator, f_divergence, make_generator, tv_distance
from .mdp import (
    SoftmaxPolicy,
    StochasticPolicy,
    TabularMdp,
    TripletOccupancy,
    balance_residual,
    expected_return,
    state_action_occupancy,
    state_occupancy,
    triplet_occupancy,
)
from .dataset import Dataset, generate_dataset, load_dataset, save_dataset
from .robust import (
    DualState,
    Problem,
    dual_objective,
    e_score,
    expected_imitation_loss,
    imitation_loss,
    optimal_weight,
    weighted_policy_loss,
)
from .solver import SolverConfig, TrainingHistory, train_bc, train_bedroil
from .baselines import run_baseline

__version__ = "0.1.0"

__all__ = [
    "GENERATOR_NAMES", "FGenerator", "f_divergence", "make_generator", "tv_distance",
    "SoftmaxPolicy", "StochasticPolicy", "TabularMdp", "TripletOccupancy", "balance_residual",
    "expected_return", "state_action_occupancy", "state_occupancy", "triplet_occupancy",
    "Dataset", "generate_dataset", "load_dataset", "save_dataset",
    "DualState", "Problem", "dual_objective", "e_score", "expected_imitation_loss",
    "imitation_loss", "optimal_weight", "weighted_policy_loss",
    "SolverConfig", "TrainingHistory", "train_bc", "train_bedroil", "run_baseline",
]
