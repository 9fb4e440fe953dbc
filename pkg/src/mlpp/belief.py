"""Weighted particle beliefs and SIR filtering between executed steps."""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mlpp.core import Action, Observation, PomdpModel, State

log = logging.getLogger(__name__)

DEFAULT_PARTICLES = 2000


class EmptyBeliefError(ValueError):
    pass


class ParticleDepletionError(RuntimeError):
    """Every propagated particle has (numerically) zero observation likelihood."""


def systematic_resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling; ``weights`` must sum to one."""
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cumulative, positions, side="right")


@dataclass
class ParticleBelief:
    particles: list
    weights: np.ndarray
    capacity: int = DEFAULT_PARTICLES

    def __post_init__(self):
        if not self.particles:
            raise EmptyBeliefError("belief needs at least one particle")
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.particles),):
            raise ValueError("one weight per particle required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        total = self.weights.sum()
        if not total > 0:
            raise ValueError("weights must not all be zero")
        self.weights = self.weights / total
        if len(self.particles) > self.capacity:
            raise ValueError("more particles than capacity")
        self._cdf = None

    @classmethod
    def uniform(cls, particles: Sequence[State], capacity: int | None = None) -> ParticleBelief:
        particles = list(particles)
        n = len(particles)
        return cls(particles, np.full(n, 1.0 / n) if n else np.zeros(0),
                   capacity if capacity is not None else max(n, 1))

    @classmethod
    def from_model(cls, model: PomdpModel, n: int, rng: np.random.Generator) -> ParticleBelief:
        return cls.uniform([model.initial_state(rng) for _ in range(n)], n)

    def __len__(self) -> int:
        return len(self.particles)

    def sample(self, rng: np.random.Generator) -> State:
        """Return particle ``i`` with probability ``weights[i]``."""
        if len(self.particles) == 1:
            return self.particles[0]
        if self._cdf is None:
            self._cdf = np.cumsum(self.weights).tolist()
            self._cdf[-1] = 1.0
        i = bisect.bisect_right(self._cdf, rng.random())
        return self.particles[min(i, len(self.particles) - 1)]

    def probability(self, predicate) -> float:
        """Total weight of the particles satisfying ``predicate``."""
        return float(sum(w for s, w in zip(self.particles, self.weights) if predicate(s)))

    def mean(self) -> np.ndarray:
        return np.average(np.asarray(self.particles, dtype=float), axis=0, weights=self.weights)


def sample_state(belief: ParticleBelief, rng: np.random.Generator) -> State:
    return belief.sample(rng)


def _propagate(belief: ParticleBelief, a: Action, o: Observation, model: PomdpModel,
               rng: np.random.Generator) -> tuple[list, np.ndarray]:
    n = belief.capacity
    idx = systematic_resample(belief.weights, n, rng)
    level = model.max_level
    particles = []
    weights = np.empty(n)
    for j, i in enumerate(idx):
        s = belief.particles[i]
        if model.is_terminal(s):
            # the executed system did not terminate, so terminal hypotheses die
            particles.append(s)
            weights[j] = 0.0
            continue
        s2, _ = model.transition(level, s, a, model.sample_noise(rng))
        particles.append(s2)
        weights[j] = 0.0 if model.is_terminal(s2) else model.obs_likelihood(o, s2, a)
    return particles, weights


def _resampled(particles: list, weights: np.ndarray, capacity: int,
               rng: np.random.Generator) -> ParticleBelief:
    weights = weights / weights.sum()
    idx = systematic_resample(weights, capacity, rng)
    return ParticleBelief([particles[i] for i in idx], np.full(capacity, 1.0 / capacity), capacity)


def sir_update(belief: ParticleBelief, a: Action, o: Observation, model: PomdpModel,
               rng: np.random.Generator) -> ParticleBelief:
    """One SIR step using the reference (level ``L``) dynamics.

    Raises :class:`ParticleDepletionError` when no propagated particle explains
    ``o``.
    """
    particles, weights = _propagate(belief, a, o, model, rng)
    total = weights.sum()
    if not np.isfinite(total) or total <= 1e-300:
        raise ParticleDepletionError(f"all particles inconsistent with observation {o!r}")
    return _resampled(particles, weights, belief.capacity, rng)


def update_belief(belief: ParticleBelief, a: Action, o: Observation, model: PomdpModel,
                  rng: np.random.Generator) -> tuple[ParticleBelief, bool]:
    """SIR update with depletion recovery; returns ``(belief, depleted)``.

    On depletion the prior is propagated again with noise scales doubled. If
    that fails too, the non-terminal propagated particles are kept with
    uniform weights, or the prior itself when none survive, so that a trial
    never aborts.
    """
    try:
        return sir_update(belief, a, o, model, rng), False
    except ParticleDepletionError:
        log.warning("particle depletion after action %r; reinjecting with inflated noise", a)
    inflated = model.with_noise_scale(2.0)
    particles, weights = _propagate(belief, a, o, inflated, rng)
    total = weights.sum()
    if np.isfinite(total) and total > 1e-300:
        return _resampled(particles, weights, belief.capacity, rng), True
    log.warning("inflated reinjection failed; keeping prior-propagated particles")
    alive = np.array([0.0 if model.is_terminal(s) else 1.0 for s in particles])
    if alive.sum() == 0:
        # every hypothesis terminated but the system did not: keep the prior
        return ParticleBelief(list(belief.particles), belief.weights.copy(), belief.capacity), True
    return _resampled(particles, alive, belief.capacity, rng), True
