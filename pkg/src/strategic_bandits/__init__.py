"""Incentive-compatible collaboration protocols for multi-agent Bayesian bandits."""

from .algos import MAFAEE, MASE, MATS, MAUCB, SingleAgentOracle, Victim, make_algorithm
from .caos import CaosContext, CaosStrategy, compute_active_set, psi
from .core import DiscretePrior, Instance, PosteriorState
from .engine import DeviationSpec, expected_value, make_deviation, run_episode
from .oer import OerSolver, oer, root_values

__all__ = [
    "MAFAEE",
    "MASE",
    "MATS",
    "MAUCB",
    "CaosContext",
    "CaosStrategy",
    "DeviationSpec",
    "DiscretePrior",
    "Instance",
    "OerSolver",
    "PosteriorState",
    "SingleAgentOracle",
    "Victim",
    "compute_active_set",
    "expected_value",
    "make_algorithm",
    "make_deviation",
    "oer",
    "psi",
    "root_values",
    "run_episode",
]
