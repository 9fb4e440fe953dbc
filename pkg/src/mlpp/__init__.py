"""Multilevel Monte-Carlo tree search for online POMDP planning."""

from mlpp.baseline import BaselineConfig, SingleLevelPlanner
from mlpp.belief import ParticleBelief, sir_update, update_belief
from mlpp.core import LevelSchedule, ModelError, PomdpModel
from mlpp.solver import Budget, MLPPPlanner, SolverConfig, Streams, run_trial
from mlpp.tree import HistoryNode

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig", "Budget", "HistoryNode", "LevelSchedule", "MLPPPlanner", "ModelError",
    "ParticleBelief", "PomdpModel", "SingleLevelPlanner", "SolverConfig", "Streams",
    "run_trial", "sir_update", "update_belief",
]
