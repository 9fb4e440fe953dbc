"""POMDP model abstraction with level-indexed deterministic simulative models.

A model exposes one deterministic transition function per level ``l`` in
``0..L``. Each call consumes a fixed-length vector ``psi`` of uniform draws;
feeding the same ``psi`` to two levels yields correlated transitions, which is
what the multilevel estimator relies on. Level ``L`` is the reference model.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Any, Hashable, Sequence

import numpy as np

State = Any
Observation = Any
Action = int
NoiseDraw = Sequence[float]

_STD_NORMAL = NormalDist()
# Keeps the inverse CDF finite at the closed ends of [0, 1].
_PSI_EPS = 1e-12


class ModelError(ValueError):
    """Invalid input handed to a model (bad level, malformed noise draw)."""


def std_normal(u: float) -> float:
    """Map a uniform draw to a standard normal through the inverse CDF.

    ``u = 0.5`` maps to exactly 0, so a noise vector of midpoints is the
    noise-free transition.
    """
    if u <= _PSI_EPS:
        u = _PSI_EPS
    elif u >= 1.0 - _PSI_EPS:
        u = 1.0 - _PSI_EPS
    return _STD_NORMAL.inv_cdf(u)


def validate_noise(psi: NoiseDraw, dim: int) -> tuple[float, ...]:
    """Check that ``psi`` is a valid noise draw of length ``dim``."""
    psi = tuple(float(u) for u in psi)
    if len(psi) != dim:
        raise ModelError(f"noise draw has length {len(psi)}, model expects {dim}")
    for u in psi:
        if not 0.0 <= u <= 1.0:
            raise ModelError(f"noise entry {u!r} outside [0, 1]")
    return psi


@dataclass(frozen=True)
class LevelSchedule:
    """Geometric level schedule ``C1 * 2**(-C2 * l)`` for ``l`` in ``0..L``."""

    c1: float
    c2: float
    max_level: int

    def __post_init__(self):
        if not self.c1 > 0 or not self.c2 > 0:
            raise ValueError("schedule constants must be positive")
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")

    def parameter(self, level: int) -> float:
        if not 0 <= level <= self.max_level:
            raise ModelError(f"level {level} outside 0..{self.max_level}")
        return self.c1 * 2.0 ** (-self.c2 * level)

    def parameters(self) -> list[float]:
        return [self.parameter(l) for l in range(self.max_level + 1)]


def level_parameter(schedule: LevelSchedule, level: int) -> float:
    return schedule.parameter(level)


@dataclass(frozen=True)
class StateSpace:
    dim: int
    low: tuple[float, ...] | None = None
    high: tuple[float, ...] | None = None
    discrete: bool = False


@dataclass(frozen=True)
class ObservationSpace:
    dim: int
    values: tuple[Hashable, ...] | None = None

    @property
    def discrete(self) -> bool:
        return self.values is not None


class PomdpModel(abc.ABC):
    """A POMDP with ``L + 1`` deterministic simulative transition models.

    Subclasses implement :meth:`transition` and friends. Instances are treated
    as immutable once built; nothing in the hot path mutates them.
    """

    name: str = "model"
    action_labels: tuple[str, ...] = ()
    state_space: StateSpace
    observation_space: ObservationSpace

    def __init__(self, *, n_actions: int, max_level: int, noise_dim: int,
                 discount: float, max_steps: int):
        if n_actions < 1:
            raise ValueError("action set must be non-empty")
        if max_level < 0:
            raise ValueError("max_level must be >= 0")
        if not 0.0 < discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")
        self.actions: tuple[int, ...] = tuple(range(n_actions))
        self.max_level = max_level
        self.noise_dim = noise_dim
        self.discount = discount
        self.max_steps = max_steps

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_levels(self) -> int:
        return self.max_level + 1

    def simulate_step(self, level: int, s: State, a: Action,
                      psi: NoiseDraw) -> tuple[State, Observation]:
        """Validated entry point for one step of the level-``level`` model."""
        if not 0 <= level <= self.max_level:
            raise ModelError(f"level {level} outside 0..{self.max_level}")
        if a not in self.actions:
            raise ModelError(f"unknown action {a!r}")
        psi = validate_noise(psi, self.noise_dim)
        if self.is_terminal(s):
            raise ModelError("cannot step from a terminal state")
        return self.transition(level, s, a, psi)

    @abc.abstractmethod
    def transition(self, level: int, s: State, a: Action,
                   psi: NoiseDraw) -> tuple[State, Observation]:
        """Unchecked ``f_level(s, a, psi) -> (s', o)``; used by the solvers."""

    @abc.abstractmethod
    def reward(self, s: State, a: Action) -> float:
        ...

    def step_reward(self, s: State, a: Action, s_next: State) -> float:
        """Reward credited to the transition ``s -a-> s_next``.

        Defaults to ``reward(s, a)``. Models with terminal rewards override it
        so the terminal reward lands on the step that enters the terminal.
        """
        return self.reward(s, a)

    @abc.abstractmethod
    def is_terminal(self, s: State) -> bool:
        ...

    @abc.abstractmethod
    def heuristic(self, s: State) -> float:
        """Cheap value-to-go estimate of ``s``; 0 for terminal states."""

    @abc.abstractmethod
    def obs_likelihood(self, o: Observation, s_next: State, a: Action) -> float:
        """Probability mass (discrete) or density (continuous) of ``o``."""

    @abc.abstractmethod
    def initial_state(self, rng: np.random.Generator) -> State:
        """Draw a state from the initial belief."""

    def obs_key(self, o: Observation) -> Hashable:
        """Tree-edge key for an observation; identity for discrete ones."""
        return o

    def outcome(self, s: State) -> str:
        """Label of a terminal state: goal, collision or other-terminal."""
        return "other-terminal"

    def step_cost(self, level: int) -> float:
        """Simulation cost of one planner step at ``level`` (arbitrary units)."""
        return 1.0

    def with_noise_scale(self, factor: float) -> PomdpModel:
        """Copy of the model with noise scales multiplied by ``factor``."""
        return self

    def sample_noise(self, rng: np.random.Generator) -> tuple[float, ...]:
        return tuple(rng.random(self.noise_dim).tolist())


def discounted_sum(rewards: Sequence[float], discount: float) -> float:
    total = 0.0
    for r in reversed(rewards):
        total = r + discount * total
    return total


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi
