"""Tabular reward decomposition into independently obtainable components."""

from .decomposition import (
    AlphaScheme,
    DecompositionParams,
    ObjectiveReport,
    decomposed_rewards,
    evaluate_objective,
    gradient_exact,
    gradient_mc,
    optimal_policies,
)
from .induced import ControlConfig, generalization_experiment, induce
from .mdp import GridworldSpec, TabularMdp, build_gridworld, restrict_rewards
from .planner import DeterministicPolicy, occupancy, policy_evaluation, value_iteration
from .qlearn import PolicySet, ReplayBuffer
from .trainer import TrainerConfig, TrainResult, select_best_run, train

__version__ = "0.1.0"

__all__ = [
    "AlphaScheme", "ControlConfig", "DecompositionParams", "DeterministicPolicy", "GridworldSpec",
    "ObjectiveReport", "PolicySet", "ReplayBuffer", "TabularMdp", "TrainResult", "TrainerConfig",
    "build_gridworld", "decomposed_rewards", "evaluate_objective", "generalization_experiment",
    "gradient_exact", "gradient_mc", "induce", "occupancy", "optimal_policies", "policy_evaluation",
    "restrict_rewards", "select_best_run", "train", "value_iteration",
]
