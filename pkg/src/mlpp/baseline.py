"""Single-level POMCP-style baseline.

Plans with one fixed approximation level ``l*`` using the same tree, episode
sampler and backup as the multilevel planner, so comparisons isolate the
estimator. Its tree stores level-``l*`` returns in the level-0 slots, so the
action value is the plain Monte-Carlo mean.
"""

from __future__ import annotations

from dataclasses import dataclass

from mlpp.belief import DEFAULT_PARTICLES
from mlpp.core import PomdpModel
from mlpp.solver import Budget, _Planner, sample_episode
from mlpp.tree import backup_episode


@dataclass
class BaselineConfig:
    level: int = 0
    c: float = 1.0
    budget: Budget = Budget()
    particles: int = DEFAULT_PARTICLES
    seed: int = 0
    max_depth: int | None = None


class SingleLevelPlanner(_Planner):
    def __init__(self, model: PomdpModel, config: BaselineConfig | None = None):
        config = config or BaselineConfig()
        if not 0 <= config.level <= model.max_level:
            raise ValueError(f"planning level {config.level} outside 0..{model.max_level}")
        self.model = model
        self.config = config
        self.budget = config.budget
        self.n_stat_levels = 1
        self.max_depth = config.max_depth or model.max_steps

    def _iterate(self, root, belief, streams, stats):
        model = self.model
        e = sample_episode(model, root, belief, 0, streams.plan, self.config.c,
                           self.max_depth, sim_level=self.config.level)
        stats.record(model, e)
        backup_episode(e, model.discount)


def baseline_plan(model: PomdpModel, root, belief, config: BaselineConfig, streams):
    return SingleLevelPlanner(model, config).plan(root, belief, streams)[0]
