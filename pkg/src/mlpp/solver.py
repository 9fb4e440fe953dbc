"""The multilevel planner: level-0 episodes, correlated pairs, the planning loop
and full closed-loop trials."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from mlpp.belief import DEFAULT_PARTICLES, ParticleBelief, update_belief
from mlpp.core import Action, PomdpModel
from mlpp.tree import (
    Episode,
    HistoryNode,
    NoPlanError,
    backup_difference,
    backup_episode,
    best_action,
    ucb1_select,
)

log = logging.getLogger(__name__)

BUDGET_KINDS = ("iterations", "episodes", "cost", "time_ms")


@dataclass(frozen=True)
class Budget:
    """Per-step planning budget.

    ``iterations`` counts planning-loop passes (one level-0 episode plus any
    correlated pairs), ``episodes`` counts every simulated episode including
    both members of a pair, ``cost`` counts simulation cost units (see
    ``PomdpModel.step_cost``) and ``time_ms`` is wall-clock.
    """

    kind: str = "episodes"
    amount: float = 1000

    def __post_init__(self):
        if self.kind not in BUDGET_KINDS:
            raise ValueError(f"budget kind must be one of {BUDGET_KINDS}, got {self.kind!r}")
        if not self.amount > 0:
            raise ValueError("budget must be positive")

    @classmethod
    def parse(cls, text: str | int | float) -> Budget:
        """``"1000"``, ``"1000 episodes"``, ``"cost:5000"`` or ``"250ms"``."""
        if isinstance(text, (int, float)):
            return cls("episodes", text)
        text = text.strip()
        if text.endswith("ms"):
            return cls("time_ms", float(text[:-2]))
        if ":" in text:
            kind, amount = text.split(":", 1)
            return cls(kind.strip(), float(amount))
        parts = text.split()
        if len(parts) == 2:
            return cls(parts[1], float(parts[0]))
        return cls("episodes", float(text))

    def __str__(self) -> str:
        return f"{self.kind}:{self.amount:g}"


@dataclass
class SolverConfig:
    c0: float = 1.0
    c_levels: float | Sequence[float] | None = None
    budget: Budget = field(default_factory=Budget)
    particles: int = DEFAULT_PARTICLES
    seed: int = 0
    pairs_per_iteration: int = 1
    max_depth: int | None = None

    def __post_init__(self):
        if self.pairs_per_iteration < 0:
            raise ValueError("pairs_per_iteration must be >= 0")
        if self.particles < 1:
            raise ValueError("particles must be >= 1")

    def exploration(self, max_level: int) -> list[float]:
        """Exploration constant per level, index 0 being ``c0``."""
        if self.c_levels is None:
            return [self.c0] * (max_level + 1)
        if isinstance(self.c_levels, (int, float)):
            return [self.c0] + [float(self.c_levels)] * max_level
        cs = [float(c) for c in self.c_levels]
        if len(cs) != max_level:
            raise ValueError(f"need {max_level} exploration constants for levels 1..{max_level}")
        return [self.c0] + cs


class Streams:
    """Independent generators for the separate random consumers of a trial.

    The level-0 stage, the correlated stage, the executed system and the
    belief filter each own a stream, so adding correlated sampling never
    perturbs the level-0 search.
    """

    names = ("plan", "corr", "env", "belief")

    def __init__(self, seed: int | Sequence[int]):
        seq = np.random.SeedSequence(seed)
        for name, child_seq in zip(self.names, seq.spawn(len(self.names))):
            setattr(self, name, np.random.default_rng(child_seq))


def sample_level(rng: np.random.Generator, max_level: int) -> int:
    """Draw ``l`` in ``1..max_level`` with probability proportional to ``2**-l``."""
    if max_level < 1:
        raise ValueError("sampling a correction level needs max_level >= 1")
    u = rng.random() * (1.0 - 2.0 ** -max_level)
    mass = 0.5
    for l in range(1, max_level):
        if u < mass:
            return l
        u -= mass
        mass *= 0.5
    return max_level


def sample_episode(model: PomdpModel, h: HistoryNode, belief: ParticleBelief, level: int,
                   rng: np.random.Generator, c: float, max_depth: int,
                   sim_level: int | None = None) -> Episode:
    """Walk and extend the tree from ``h`` using the level-``level`` statistics.

    Stops at a terminal state, after the first untried action (level 0, with
    a heuristic tail), at a node whose ``A'(h)`` is empty (finer levels, also
    with a heuristic tail) or at ``max_depth`` steps. ``sim_level`` selects the
    transition model when it differs from the statistics level (baselines).
    """
    if sim_level is None:
        sim_level = level
    transition = model.transition
    is_terminal = model.is_terminal
    step_reward = _reward_fn(model)
    obs_key = _key_fn(model)
    d = model.noise_dim
    random = rng.random
    s = belief.sample(rng)
    e = Episode(level=sim_level)
    states, actions, observations, rewards, psis, nodes = (
        e.states, e.actions, e.observations, e.rewards, e.psis, e.nodes)
    states.append(s)
    depth = 0
    while True:
        if is_terminal(s):
            stop = "terminal"
            break
        if depth >= max_depth:
            stop = "horizon"
            break
        a, unvisited = ucb1_select(h, level, c, rng)
        if a is None:
            stop = "empty"
            break
        psi = [random()] if d == 1 else random(d).tolist()
        s2, o = transition(sim_level, s, a, psi)
        rewards.append(step_reward(s, a, s2))
        actions.append(a)
        observations.append(o)
        psis.append(psi)
        nodes.append(h)
        states.append(s2)
        h = h.child(a, o if obs_key is None else obs_key(o))
        s = s2
        depth += 1
        if unvisited:
            stop = "unvisited"
            break
    e.stop = stop
    e.terminal = terminal = is_terminal(s)
    if not terminal and (stop == "unvisited" or stop == "empty"):
        e.tail = model.heuristic(s)
    return e


def _reward_fn(model: PomdpModel):
    if type(model).step_reward is PomdpModel.step_reward:
        reward = model.reward
        return lambda s, a, s2: reward(s, a)
    return model.step_reward


def _key_fn(model: PomdpModel):
    """``None`` when observations are their own keys."""
    return None if type(model).obs_key is PomdpModel.obs_key else model.obs_key


def replay_episode(model: PomdpModel, h: HistoryNode, fine: Episode, level: int) -> Episode:
    """Re-run ``fine``'s initial state, actions and noise through ``f_level``.

    Truncates when the replay reaches a terminal state; a replay that runs the
    full length gets a heuristic tail (unless ``fine`` hit the depth cap).
    """
    transition = model.transition
    is_terminal = model.is_terminal
    step_reward = model.step_reward
    obs_key = model.obs_key
    e = Episode(level=level)
    s = fine.states[0]
    e.states.append(s)
    for a, psi in zip(fine.actions, fine.psis):
        s2, o = transition(level, s, a, psi)
        e.rewards.append(step_reward(s, a, s2))
        e.actions.append(a)
        e.observations.append(o)
        e.psis.append(psi)
        e.nodes.append(h)
        e.states.append(s2)
        h = h.child(a, obs_key(o))
        s = s2
        if is_terminal(s2):
            break
    e.terminal = is_terminal(s)
    if e.terminal:
        e.stop = "terminal"
    elif len(e.actions) == len(fine.actions) and fine.stop != "horizon":
        e.stop = fine.stop
        e.tail = model.heuristic(s)
    else:
        e.stop = fine.stop
    return e


@dataclass
class PlanStats:
    """Work done during one call to ``plan``."""

    n_levels: int
    iterations: int = 0
    episodes: list = None
    steps: list = None
    cost: float = 0.0
    seconds: float = 0.0
    no_plan: bool = False

    def __post_init__(self):
        self.episodes = [0] * self.n_levels
        self.steps = [0] * self.n_levels

    def record(self, model: PomdpModel, e: Episode) -> None:
        self.episodes[e.level] += 1
        self.steps[e.level] += len(e.actions)
        # an episode that takes no step still drew a state; charge one step so
        # cost budgets always run out
        self.cost += max(len(e.actions), 1) * model.step_cost(e.level)


class _Planner:
    """Budget loop and trial plumbing shared by MLPP and the baseline."""

    model: PomdpModel
    n_stat_levels: int

    def new_root(self) -> HistoryNode:
        return HistoryNode(self.model.n_actions, self.n_stat_levels)

    def _budget_left(self, budget: Budget, stats: PlanStats, start: float) -> bool:
        if stats.iterations == 0:
            return True
        if budget.kind == "iterations":
            return stats.iterations < budget.amount
        if budget.kind == "episodes":
            return sum(stats.episodes) < budget.amount
        if budget.kind == "cost":
            return stats.cost < budget.amount
        return (time.perf_counter() - start) * 1000.0 < budget.amount

    def _iterate(self, root: HistoryNode, belief: ParticleBelief, streams: Streams,
                 stats: PlanStats) -> None:
        raise NotImplementedError

    def search(self, root: HistoryNode, belief: ParticleBelief, streams: Streams) -> PlanStats:
        stats = PlanStats(self.model.n_levels)
        start = time.perf_counter()
        while self._budget_left(self.budget, stats, start):
            self._iterate(root, belief, streams, stats)
            stats.iterations += 1
        stats.seconds = time.perf_counter() - start
        return stats

    def plan(self, root: HistoryNode, belief: ParticleBelief,
             streams: Streams) -> tuple[Action, PlanStats]:
        """Search from ``root`` until the budget is spent, then pick an action.

        If no action could be visited, a uniformly random action is returned
        and ``stats.no_plan`` is set.
        """
        stats = self.search(root, belief, streams)
        try:
            return best_action(root), stats
        except NoPlanError:
            log.warning("no visited action after planning; acting at random")
            stats.no_plan = True
            return int(streams.plan.random() * self.model.n_actions), stats


class MLPPPlanner(_Planner):
    """Monte-Carlo tree search with multilevel value corrections."""

    def __init__(self, model: PomdpModel, config: SolverConfig | None = None):
        self.model = model
        self.config = config or SolverConfig()
        self.budget = self.config.budget
        self.n_stat_levels = model.n_levels
        self.c = self.config.exploration(model.max_level)
        self.max_depth = self.config.max_depth or model.max_steps
        self.on_pair: Callable | None = None

    def sample_correlated_episodes(self, root: HistoryNode, belief: ParticleBelief,
                                   rng: np.random.Generator) -> tuple[int, Episode, Episode]:
        """Sample a level, a fine episode on it, replay it one level down and
        back up the return differences."""
        model = self.model
        l = sample_level(rng, model.max_level)
        fine = sample_episode(model, root, belief, l, rng, self.c[l], self.max_depth)
        coarse = replay_episode(model, root, fine, l - 1)
        backup_difference(fine, coarse, l, model.discount)
        if self.on_pair is not None:
            self.on_pair(l, fine, coarse)
        return l, fine, coarse

    def _iterate(self, root, belief, streams, stats):
        model = self.model
        e = sample_episode(model, root, belief, 0, streams.plan, self.c[0], self.max_depth)
        stats.record(model, e)
        backup_episode(e, model.discount)
        if model.max_level < 1:
            return
        for _ in range(self.config.pairs_per_iteration):
            if not any(root.action_visits[0]):
                break
            _, fine, coarse = self.sample_correlated_episodes(root, belief, streams.corr)
            stats.record(model, fine)
            stats.record(model, coarse)


def plan(model: PomdpModel, root: HistoryNode, belief: ParticleBelief, config: SolverConfig,
         streams: Streams) -> Action:
    return MLPPPlanner(model, config).plan(root, belief, streams)[0]


@dataclass
class StepRecord:
    t: int
    action: Action
    observation: object
    reward: float
    state: object
    iterations: int
    cost: float
    seconds: float
    no_plan: bool = False
    depleted: bool = False


@dataclass
class TrialResult:
    seed: object
    discounted_return: float
    steps: int
    outcome: str
    trajectory: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    cost: float = 0.0
    seconds: float = 0.0

    @property
    def cost_per_step(self) -> float:
        return self.cost / self.steps if self.steps else 0.0

    @property
    def seconds_per_step(self) -> float:
        return self.seconds / self.steps if self.steps else 0.0


def run_trial(model: PomdpModel, planner: _Planner, seed, *,
              belief: ParticleBelief | None = None, state=None,
              on_step: Callable | None = None) -> TrialResult:
    """Closed loop: plan, execute on the reference model, filter, re-root.

    ``on_step(t, root, belief, action)`` is called after each planning phase,
    before the action is executed.
    """
    streams = Streams(seed)
    n_particles = getattr(planner.config, "particles", DEFAULT_PARTICLES)
    if belief is None:
        belief = initial_belief(model, n_particles, streams.belief)
    if state is None:
        state = model.initial_state(streams.env)
    root = planner.new_root()
    result = TrialResult(seed=seed, discounted_return=0.0, steps=0, outcome="timeout",
                         episodes=[0] * model.n_levels)
    level = model.max_level
    scale = 1.0
    for t in range(model.max_steps):
        if model.is_terminal(state):
            break
        a, stats = planner.plan(root, belief, streams)
        if on_step is not None:
            on_step(t, root, belief, a)
        psi = model.sample_noise(streams.env)
        nxt, o = model.transition(level, state, a, psi)
        r = model.step_reward(state, a, nxt)
        result.discounted_return += scale * r
        scale *= model.discount
        result.steps += 1
        result.cost += stats.cost
        result.seconds += stats.seconds
        for l, n in enumerate(stats.episodes):
            result.episodes[l] += n
        record = StepRecord(t, a, o, r, nxt, stats.iterations, stats.cost, stats.seconds,
                            no_plan=stats.no_plan)
        result.trajectory.append(record)
        state = nxt
        if model.is_terminal(state):
            break
        belief, record.depleted = update_belief(belief, a, o, model, streams.belief)
        root = root.child(a, model.obs_key(o))
    if model.is_terminal(state):
        result.outcome = model.outcome(state)
    return result


def initial_belief(model: PomdpModel, n: int, rng: np.random.Generator) -> ParticleBelief:
    particles = getattr(model, "initial_particles", None)
    if particles is not None:
        return ParticleBelief.uniform(particles(n, rng), n)
    return ParticleBelief.from_model(model, n, rng)
