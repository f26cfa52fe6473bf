"""FTRL-PBM: online learning to rank under the position-based model with a
1/2-Tsallis follow-the-regularized-leader learner."""

from .core import Action, DimensionError, InvalidActionError, ProblemDims, allocation_feasible
from .environments import EnvironmentSpec, StochasticParams, gap_matrix, preset
from .harness import ExperimentConfig, check_invariants, run_experiment
from .learner import FTRLPBM, LearnerState, estimate_loss, initial_state, learning_rate, select, update
from .polytope import linmin
from .sampler import decompose, sample_action
from .solver import ConfigError, SolveResult, SolverConfig, solve_cbp, solve_fw, solve_leader

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ConfigError",
    "DimensionError",
    "EnvironmentSpec",
    "ExperimentConfig",
    "FTRLPBM",
    "InvalidActionError",
    "LearnerState",
    "ProblemDims",
    "SolveResult",
    "SolverConfig",
    "StochasticParams",
    "allocation_feasible",
    "check_invariants",
    "decompose",
    "estimate_loss",
    "gap_matrix",
    "initial_state",
    "learning_rate",
    "linmin",
    "preset",
    "run_experiment",
    "sample_action",
    "select",
    "solve_cbp",
    "solve_fw",
    "solve_leader",
    "update",
]
