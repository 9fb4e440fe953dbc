"""The Tiger problem, used as an exactly solvable oracle.

Opening a door ends the episode. Every level uses the same dynamics.
"""

from __future__ import annotations

import numpy as np

from mlpp.core import ObservationSpace, PomdpModel, StateSpace

TIGER_LEFT, TIGER_RIGHT, OPENED_CORRECT, OPENED_WRONG = 0, 1, 2, 3
LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
HEAR_LEFT, HEAR_RIGHT = 0, 1


class TigerModel(PomdpModel):
    name = "tiger"
    action_labels = ("listen", "open-left", "open-right")
    state_space = StateSpace(dim=1, discrete=True)
    observation_space = ObservationSpace(dim=1, values=(HEAR_LEFT, HEAR_RIGHT))

    def __init__(self, accuracy: float = 0.85, listen_reward: float = -1.0,
                 correct_reward: float = 10.0, wrong_reward: float = -100.0,
                 discount: float = 0.95, max_level: int = 1, max_steps: int = 50):
        super().__init__(n_actions=3, max_level=max_level, noise_dim=1,
                         discount=discount, max_steps=max_steps)
        self.accuracy = accuracy
        self.listen_reward = listen_reward
        self.correct_reward = correct_reward
        self.wrong_reward = wrong_reward

    def states(self) -> tuple[int, ...]:
        return (TIGER_LEFT, TIGER_RIGHT, OPENED_CORRECT, OPENED_WRONG)

    def transition(self, level, s, a, psi):
        u = psi[0]
        if a == LISTEN:
            if u < self.accuracy:
                return s, s
            return s, 1 - s
        correct = (a == OPEN_LEFT) == (s == TIGER_RIGHT)
        return (OPENED_CORRECT if correct else OPENED_WRONG), (HEAR_LEFT if u < 0.5 else HEAR_RIGHT)

    def transition_distribution(self, level, s, a) -> dict:
        """Exact ``T_l(s, a, s') Z(s', a, o)`` as ``{(s', o): p}``."""
        if a == LISTEN:
            return {(s, s): self.accuracy, (s, 1 - s): 1.0 - self.accuracy}
        correct = (a == OPEN_LEFT) == (s == TIGER_RIGHT)
        s2 = OPENED_CORRECT if correct else OPENED_WRONG
        return {(s2, HEAR_LEFT): 0.5, (s2, HEAR_RIGHT): 0.5}

    def reward(self, s, a):
        if self.is_terminal(s):
            return 0.0
        if a == LISTEN:
            return self.listen_reward
        correct = (a == OPEN_LEFT) == (s == TIGER_RIGHT)
        return self.correct_reward if correct else self.wrong_reward

    def is_terminal(self, s):
        return s >= OPENED_CORRECT

    def heuristic(self, s):
        return 0.0 if s >= OPENED_CORRECT else self.correct_reward

    def obs_likelihood(self, o, s_next, a):
        if a == LISTEN:
            return self.accuracy if o == s_next else 1.0 - self.accuracy
        return 0.5

    def initial_state(self, rng):
        return TIGER_LEFT if rng.random() < 0.5 else TIGER_RIGHT

    def initial_particles(self, n, rng=None, p_left: float = 0.5):
        n_left = int(round(n * p_left))
        return [TIGER_LEFT] * n_left + [TIGER_RIGHT] * (n - n_left)

    def outcome(self, s):
        return "goal" if s == OPENED_CORRECT else "other-terminal"


class TigerOracle:
    """Exact value iteration over the belief ``p = P(tiger left)``.

    The belief simplex is discretised on ``grid`` points with linear
    interpolation between them.
    """

    def __init__(self, model: TigerModel, grid: int = 10001, tol: float = 1e-12):
        self.model = model
        self.p = np.linspace(0.0, 1.0, grid)
        acc, g = model.accuracy, model.discount
        p = self.p
        z_left = p * acc + (1 - p) * (1 - acc)
        z_right = 1.0 - z_left
        post_left = p * acc / z_left
        post_right = p * (1 - acc) / np.where(z_right > 0, z_right, 1.0)
        r_open_left = p * model.wrong_reward + (1 - p) * model.correct_reward
        r_open_right = p * model.correct_reward + (1 - p) * model.wrong_reward
        v = np.zeros_like(p)
        for _ in range(100000):
            q_listen = model.listen_reward + g * (z_left * np.interp(post_left, p, v)
                                                  + z_right * np.interp(post_right, p, v))
            v_new = np.maximum(q_listen, np.maximum(r_open_left, r_open_right))
            if np.max(np.abs(v_new - v)) < tol:
                v = v_new
                break
            v = v_new
        self.v = v
        self.q = np.stack([q_listen, r_open_left, r_open_right])

    def q_values(self, p_left: float) -> np.ndarray:
        return np.array([np.interp(p_left, self.p, row) for row in self.q])

    def value(self, p_left: float) -> float:
        return float(np.interp(p_left, self.p, self.v))

    def optimal_action(self, p_left: float) -> int:
        return int(np.argmax(self.q_values(p_left)))
