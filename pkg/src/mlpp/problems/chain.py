"""A short hidden-bit chain with two genuinely different levels.

The state is ``(t, x)``: a step counter and a hidden bit. Each step the bit
flips with a level-dependent probability and a noisy reading of the new bit is
observed. The reward depends on the bit, so the two levels have different
values while sharing their support. Small enough to enumerate every outcome.
"""

from __future__ import annotations

from functools import lru_cache

from mlpp.core import ObservationSpace, PomdpModel, StateSpace


class ChainModel(PomdpModel):
    name = "chain"
    state_space = StateSpace(dim=2, discrete=True)
    observation_space = ObservationSpace(dim=1, values=(0, 1))

    def __init__(self, length: int = 3, flip_probs=(0.35, 0.2), accuracy: float = 0.8,
                 bit_reward: float = 2.0, base_reward: float = 1.0, p_one: float = 0.5,
                 discount: float = 0.9, n_actions: int = 1):
        if len(flip_probs) < 1:
            raise ValueError("need at least one level")
        super().__init__(n_actions=n_actions, max_level=len(flip_probs) - 1, noise_dim=2,
                         discount=discount, max_steps=length)
        self.action_labels = tuple(f"a{i}" for i in range(n_actions))
        self.length = length
        self.flip_probs = tuple(flip_probs)
        self.accuracy = accuracy
        self.bit_reward = bit_reward
        self.base_reward = base_reward
        self.p_one = p_one
        self._value_to_go = lru_cache(maxsize=None)(self._level_value)

    def transition(self, level, s, a, psi):
        t, x = s
        if psi[0] < self.flip_probs[level]:
            x = 1 - x
        o = x if psi[1] < self.accuracy else 1 - x
        return (t + 1, x), o

    def transition_distribution(self, level, s, a) -> dict:
        t, x = s
        p = self.flip_probs[level]
        out = {}
        for x2, px in ((1 - x, p), (x, 1.0 - p)):
            for o, po in ((x2, self.accuracy), (1 - x2, 1.0 - self.accuracy)):
                out[((t + 1, x2), o)] = out.get(((t + 1, x2), o), 0.0) + px * po
        return out

    def states(self):
        return [(t, x) for t in range(self.length + 1) for x in (0, 1)]

    def reward(self, s, a):
        return self.base_reward + self.bit_reward * s[1]

    def is_terminal(self, s):
        return s[0] >= self.length

    def _level_value(self, level: int, s) -> float:
        if self.is_terminal(s):
            return 0.0
        t, x = s
        p = self.flip_probs[level]
        return self.reward(s, 0) + self.discount * (
            p * self._value_to_go(level, (t + 1, 1 - x))
            + (1 - p) * self._value_to_go(level, (t + 1, x)))

    def heuristic(self, s):
        # exact coarse-level value-to-go keeps truncated level-0 episodes unbiased
        return self._value_to_go(0, s)

    def obs_likelihood(self, o, s_next, a):
        return self.accuracy if o == s_next[1] else 1.0 - self.accuracy

    def initial_state(self, rng):
        return (0, 1 if rng.random() < self.p_one else 0)

    def initial_particles(self, n, rng=None):
        n_one = int(round(n * self.p_one))
        return [(0, 1)] * n_one + [(0, 0)] * (n - n_one)
