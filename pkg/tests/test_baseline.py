import pytest

from mlpp.baseline import BaselineConfig, SingleLevelPlanner
from mlpp.belief import ParticleBelief
from mlpp.core import ObservationSpace, PomdpModel, StateSpace
from mlpp.problems import CarNavigation, TigerModel
from mlpp.problems.tiger import LISTEN
from mlpp.solver import Budget, MLPPPlanner, SolverConfig, Streams, run_trial

SAFE, RISKY = 0, 1


class _Trap(PomdpModel):
    """The coarse model misses the trap behind the risky action."""

    name = "trap"
    state_space = StateSpace(dim=1, discrete=True)
    observation_space = ObservationSpace(dim=1, values=(0,))

    def __init__(self):
        super().__init__(n_actions=2, max_level=2, noise_dim=1, discount=0.9, max_steps=3)

    def transition(self, level, s, a, psi):
        if a == SAFE:
            return "done", 0
        return ("done" if level == 0 else "crash"), 0

    def reward(self, s, a):
        return 0.0

    def step_reward(self, s, a, s_next):
        if s_next == "crash":
            return -100.0
        return 1.0 if a == SAFE else 5.0

    def is_terminal(self, s):
        return s != "start"

    def heuristic(self, s):
        return 0.0

    def obs_likelihood(self, o, s_next, a):
        return 1.0

    def initial_state(self, rng):
        return "start"

    def outcome(self, s):
        return "collision" if s == "crash" else "goal"


@pytest.mark.parametrize("level, expected", [(0, RISKY), (1, SAFE), (2, SAFE)])
def test_planning_level_decides_trap(level, expected):
    model = _Trap()
    planner = SingleLevelPlanner(model, BaselineConfig(level=level, budget=Budget("iterations", 50)))
    a, _ = planner.plan(planner.new_root(), ParticleBelief.uniform(["start"]), Streams(0))
    assert a == expected


def test_coarse_baseline_crashes_more():
    model = _Trap()
    outcomes = {}
    for level in (0, model.max_level):
        planner = SingleLevelPlanner(model, BaselineConfig(level=level, budget=Budget("iterations", 50)))
        outcomes[level] = [run_trial(model, planner, s).outcome for s in range(5)]
    assert outcomes[0].count("collision") > outcomes[model.max_level].count("collision")


def test_finest_level_tiger_listens():
    model = TigerModel()
    n = 1000
    planner = SingleLevelPlanner(model, BaselineConfig(level=model.max_level, c=80.0,
                                                       budget=Budget("episodes", 10_000)))
    belief = ParticleBelief.uniform(model.initial_particles(n), n)
    a, _ = planner.plan(planner.new_root(), belief, Streams(0))
    assert a == LISTEN


def test_matches_single_level_mlpp():
    model = TigerModel(max_level=0)
    budget = Budget("iterations", 400)
    base = SingleLevelPlanner(model, BaselineConfig(level=0, c=80.0, budget=budget))
    mlpp = MLPPPlanner(model, SolverConfig(c0=80.0, budget=budget))
    for seed in range(3):
        a = run_trial(model, base, seed)
        b = run_trial(model, mlpp, seed)
        assert [r.action for r in a.trajectory] == [r.action for r in b.trajectory]


@pytest.mark.parametrize("level", [0, 1, 3])
def test_cost_counts_planning_level_steps(level):
    model = CarNavigation()
    planner = SingleLevelPlanner(model, BaselineConfig(level=level, c=300.0,
                                                       budget=Budget("episodes", 40), particles=20))
    belief = ParticleBelief.uniform(model.initial_particles(20))
    _, stats = planner.plan(planner.new_root(), belief, Streams(0))
    assert stats.episodes[level] == sum(stats.episodes) == 40
    assert stats.cost == pytest.approx(stats.steps[level] * model.step_cost(level))


@pytest.mark.parametrize("level", [-1, 2])
def test_invalid_level(level):
    with pytest.raises(ValueError):
        SingleLevelPlanner(TigerModel(), BaselineConfig(level=level))
