"""PendulumTorque: swing a damped pendulum up with bang-bang torque.

Levels differ only in the RK4 step used to integrate one 0.1 s control
interval. The reward is a smooth quadratic cost around the upright position,
so returns at neighbouring levels differ continuously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from mlpp.core import LevelSchedule, ObservationSpace, PomdpModel, StateSpace, std_normal, wrap_angle

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@numba.njit(cache=True)
def _accel(theta, omega, torque, mass, length, gravity, damping):
    return (torque - damping * omega - mass * gravity * length * math.sin(theta)) / (mass * length * length)


@numba.njit(cache=True)
def rk4_rollout(theta, omega, torque, dt, n, mass, length, gravity, damping):
    """Integrate ``n`` RK4 steps of size ``dt`` with constant torque."""
    for _ in range(n):
        k1t = omega
        k1w = _accel(theta, omega, torque, mass, length, gravity, damping)
        k2t = omega + 0.5 * dt * k1w
        k2w = _accel(theta + 0.5 * dt * k1t, k2t, torque, mass, length, gravity, damping)
        k3t = omega + 0.5 * dt * k2w
        k3w = _accel(theta + 0.5 * dt * k2t, k3t, torque, mass, length, gravity, damping)
        k4t = omega + dt * k3w
        k4w = _accel(theta + dt * k3t, k4t, torque, mass, length, gravity, damping)
        theta += dt * (k1t + 2.0 * k2t + 2.0 * k3t + k4t) / 6.0
        omega += dt * (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0
    return theta, omega


@dataclass(frozen=True)
class PendulumParams:
    schedule: LevelSchedule = LevelSchedule(0.0128, 1.0, 4)
    duration: float = 0.1
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 9.81
    damping: float = 0.1
    torque_max: float = 5.0
    sigma_torque: float = 0.5
    sigma_angle: float = 0.05
    sigma_velocity: float = 0.1
    velocity_weight: float = 0.1
    discount: float = 0.98
    max_steps: int = 50
    start: tuple = (0.0, 0.0)
    start_spread: float = 0.05
    obs_cell: tuple = (0.2, 0.5)
    # per-step decay of the cost assumed by the heuristic
    settle_rate: float = 0.9


def pendulum_dynamics(s, torque: float, dt: float, params: PendulumParams | None = None,
                      duration: float | None = None):
    """RK4 over one control interval using steps of at most ``dt``."""
    p = params or PendulumParams()
    duration = p.duration if duration is None else duration
    n = max(1, math.ceil(duration / dt - 1e-9))
    return rk4_rollout(float(s[0]), float(s[1]), float(torque), duration / n, n,
                       p.mass, p.length, p.gravity, p.damping)


class PendulumTorque(PomdpModel):
    """State ``(theta, omega)`` with ``theta = 0`` hanging down.

    Noise layout: ``[torque, angle sensor, velocity sensor]``.
    """

    name = "pendulum"
    action_labels = ("torque-", "torque+")
    state_space = StateSpace(dim=2)
    observation_space = ObservationSpace(dim=2)

    def __init__(self, params: PendulumParams | None = None, **overrides):
        params = params or PendulumParams()
        if overrides:
            params = replace(params, **overrides)
        self.params = params
        super().__init__(n_actions=2, max_level=params.schedule.max_level, noise_dim=3,
                         discount=params.discount, max_steps=params.max_steps)
        # the nominal step need not divide the interval; round the count up
        self.substeps = [max(1, math.ceil(params.duration / dt - 1e-9))
                         for dt in params.schedule.parameters()]
        self.dts = [params.duration / n for n in self.substeps]
        self.torques = (-params.torque_max, params.torque_max)

    def transition(self, level, s, a, psi):
        p = self.params
        torque = self.torques[a] + p.sigma_torque * std_normal(psi[0])
        theta, omega = rk4_rollout(s[0], s[1], torque, self.dts[level], self.substeps[level],
                                   p.mass, p.length, p.gravity, p.damping)
        s2 = (wrap_angle(theta), omega)
        o = (s2[0] + p.sigma_angle * std_normal(psi[1]),
             omega + p.sigma_velocity * std_normal(psi[2]))
        return s2, o

    def cost(self, s) -> float:
        err = wrap_angle(s[0] - math.pi)
        return err * err + self.params.velocity_weight * s[1] * s[1]

    def reward(self, s, a):
        return -self.cost(s)

    def step_reward(self, s, a, s_next):
        return -self.cost(s_next)

    def is_terminal(self, s):
        return False

    def heuristic(self, s):
        p = self.params
        return -self.cost(s) * p.settle_rate / (1.0 - p.discount * p.settle_rate)

    def obs_likelihood(self, o, s_next, a):
        p = self.params
        za = wrap_angle(o[0] - s_next[0]) / p.sigma_angle
        zv = (o[1] - s_next[1]) / p.sigma_velocity
        return math.exp(-0.5 * (za * za + zv * zv)) / (p.sigma_angle * p.sigma_velocity * _SQRT_2PI ** 2)

    def obs_key(self, o):
        ca, cv = self.params.obs_cell
        return (math.floor(o[0] / ca), math.floor(o[1] / cv))

    def initial_state(self, rng):
        p = self.params
        return (wrap_angle(p.start[0] + p.start_spread * float(rng.standard_normal())),
                p.start[1] + p.start_spread * float(rng.standard_normal()))

    def step_cost(self, level):
        return float(self.substeps[level])

    def with_noise_scale(self, factor):
        p = self.params
        return PendulumTorque(replace(p, sigma_torque=p.sigma_torque * factor,
                                      sigma_angle=p.sigma_angle * factor,
                                      sigma_velocity=p.sigma_velocity * factor))
