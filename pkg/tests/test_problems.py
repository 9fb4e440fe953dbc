import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlpp.problems import (
    BeaconMap,
    CarNavigation,
    CarParams,
    ConfigError,
    PendulumParams,
    PendulumTorque,
    TigerModel,
    TigerOracle,
    make_model,
)
from mlpp.problems.car import Box, beacon_probabilities, car_observe
from mlpp.problems.pendulum import pendulum_dynamics
from mlpp.problems.tiger import LISTEN, OPEN_LEFT, OPEN_RIGHT, TIGER_LEFT, TIGER_RIGHT

MID = 0.5


def _dist(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


# car


def test_signal_at_beacon_is_one():
    world = BeaconMap(beacons=((2.0, 2.0),))
    assert car_observe(world, (2.0, 2.0, 0.0, 1.5), (0.3, 0.0, 0.0)) == (1.0, 1.5)


def test_signal_at_distance_three():
    world = BeaconMap(beacons=((0.0, 0.0),))
    signal, _ = car_observe(world, (3.0, 0.0, 0.0, 0.0), (0.9, 0.0, 0.0))
    assert signal == pytest.approx(0.1)


def test_beacon_choice_inverse_distance():
    world = BeaconMap(beacons=((0.0, 0.0), (3.0, 0.0)))
    probs = beacon_probabilities(world, 1.0, 0.0)
    assert probs == pytest.approx([2 / 3, 1 / 3])
    # the uniform picks the beacon, so the nearer signal comes first
    near, _ = car_observe(world, (1.0, 0.0, 0.0, 0.0), (0.5, 0.0, 0.0))
    far, _ = car_observe(world, (1.0, 0.0, 0.0, 0.0), (0.9, 0.0, 0.0))
    assert near == pytest.approx(0.5) and far == pytest.approx(0.2)


def test_car_level_timesteps():
    model = CarNavigation()
    assert model.substeps == [1, 2, 4, 8]
    assert model.dts == pytest.approx([0.4, 0.2, 0.1, 0.05])
    assert [model.step_cost(l) for l in range(4)] == [1.0, 2.0, 4.0, 8.0]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(range(9)), st.floats(0.2, 1.5), st.floats(-math.pi, math.pi))
def test_car_levels_converge(a, v, theta):
    model = CarNavigation(CarParams(world=BeaconMap(obstacles=())))
    s = (1.0, 1.0, theta, v)
    ends = [model.simulate_step(l, s, a, [MID] * 5)[0] for l in range(4)]
    gaps = [_dist(ends[l], ends[l - 1]) for l in range(1, 4)]
    # first-order scheme: each halving of the step roughly halves the gap
    assert gaps[2] <= gaps[0] + 1e-12


def test_collision_stops_motion():
    world = BeaconMap(obstacles=(Box(1.1, 0.0, 2.0, 2.0),))
    model = CarNavigation(CarParams(world=world))
    straight = model.controls.index((0.0, 0.0))
    s2, _ = model.simulate_step(3, (1.0, 1.0, 0.0, 1.0), straight, [MID] * 5)
    assert model.is_terminal(s2) and model.outcome(s2) == "collision"
    # the second 0.05 s substep lands on the box edge
    assert s2[0] == pytest.approx(1.1)


def test_swept_collision_catches_thin_wall():
    world = BeaconMap(obstacles=(Box(1.1, 0.0, 1.12, 2.0),))
    straight = CarNavigation().controls.index((0.0, 0.0))
    s = (1.0, 1.0, 0.0, 1.0)
    point = CarNavigation(CarParams(world=world)).simulate_step(0, s, straight, [MID] * 5)[0]
    swept_model = CarNavigation(CarParams(world=world, swept_collisions=True))
    swept = swept_model.simulate_step(0, s, straight, [MID] * 5)[0]
    assert not CarNavigation(CarParams(world=world)).is_terminal(point)
    assert swept_model.outcome(swept) == "collision" and swept[0] == pytest.approx(1.1)


def test_swept_goal_catches_pass_through():
    world = BeaconMap(obstacles=(), goal=(2.0, 1.0, 0.1))
    straight = CarNavigation().controls.index((0.0, 0.0))
    s = (1.0, 1.0, 0.0, 4.0)
    plain = CarNavigation(CarParams(world=world))
    swept = CarNavigation(CarParams(world=world, swept_goal=True))
    assert not plain.is_terminal(plain.simulate_step(0, s, straight, [MID] * 5)[0])
    assert swept.outcome(swept.simulate_step(0, s, straight, [MID] * 5)[0]) == "goal"


@pytest.mark.parametrize("kwargs", [
    {"beacons": ()},
    {"goal": (3.5, 3.45, 0.6)},
])
def test_beacon_map_validation(kwargs):
    with pytest.raises(ValueError):
        BeaconMap(**kwargs)


def test_box_edges_count_as_inside():
    world = BeaconMap()
    box = world.obstacles[0]
    assert world.in_collision(box.xmin, box.ymin)
    assert not world.in_collision(box.xmin - 1e-9, box.ymin)
    gx, gy, gr = world.goal
    assert world.in_goal(gx + gr, gy) and not world.in_goal(gx + gr + 1e-9, gy)


def test_car_observation_likelihood_peaks_at_truth():
    model = CarNavigation()
    s = (2.0, 2.0, 0.0, 1.0)
    o = car_observe(model.world, s, (0.5, 0.0, 0.0))
    assert model.obs_likelihood(o, s, 0) > model.obs_likelihood(o, (2.5, 2.0, 0.0, 1.0), 0)


# pendulum


def test_pendulum_at_rest_stays():
    p = PendulumParams(damping=0.0)
    assert pendulum_dynamics((0.0, 0.0), 0.0, 0.01, p) == pytest.approx((0.0, 0.0))


def test_pendulum_without_gravity_keeps_rest():
    p = PendulumParams(gravity=0.0)
    assert pendulum_dynamics((1.0, 0.0), 0.0, 0.01, p) == pytest.approx((1.0, 0.0))


def test_pendulum_free_rotation_exact():
    p = PendulumParams(gravity=0.0, damping=0.0)
    theta, omega = pendulum_dynamics((0.3, 2.0), 0.0, 0.0128, p)
    assert theta == pytest.approx(0.5, abs=1e-12) and omega == pytest.approx(2.0, abs=1e-12)


def test_pendulum_substeps():
    model = PendulumTorque()
    assert model.substeps == [8, 16, 32, 63, 125]
    assert all(n * dt == pytest.approx(0.1) for n, dt in zip(model.substeps, model.dts))


def test_pendulum_levels_converge():
    model = PendulumTorque()
    s = (2.0, 3.0)
    ends = [model.simulate_step(l, s, 1, [MID] * 3)[0] for l in range(model.n_levels)]
    assert _dist(ends[4], ends[3]) < _dist(ends[1], ends[0])


def test_pendulum_reward_upright_is_zero():
    model = PendulumTorque()
    assert model.reward((math.pi, 0.0), 0) == 0.0
    assert model.reward((0.0, 0.0), 0) == pytest.approx(-math.pi ** 2)


# tiger


@pytest.mark.parametrize("s, a, r", [
    (TIGER_LEFT, LISTEN, -1.0),
    (TIGER_LEFT, OPEN_RIGHT, 10.0),
    (TIGER_LEFT, OPEN_LEFT, -100.0),
    (TIGER_RIGHT, OPEN_LEFT, 10.0),
])
def test_tiger_rewards(s, a, r):
    assert TigerModel().reward(s, a) == r


def test_tiger_opening_ends_episode():
    model = TigerModel()
    s2, _ = model.simulate_step(0, TIGER_LEFT, OPEN_RIGHT, [0.3])
    assert model.is_terminal(s2) and model.outcome(s2) == "goal"


def test_tiger_oracle_listens_when_unsure():
    oracle = TigerOracle(TigerModel())
    for p in (0.5, 0.7, 0.9, 0.97):
        assert oracle.optimal_action(p) == LISTEN
    assert oracle.optimal_action(0.999) == OPEN_RIGHT
    assert oracle.optimal_action(0.001) == OPEN_LEFT


def test_tiger_oracle_value_symmetric():
    oracle = TigerOracle(TigerModel())
    assert oracle.value(0.3) == pytest.approx(oracle.value(0.7), abs=1e-6)
    assert oracle.value(0.5) == pytest.approx(3.7702, abs=1e-3)


def test_tiger_oracle_bellman_consistent():
    # a one-step lookahead through the exact posterior reproduces the value
    model = TigerModel()
    oracle = TigerOracle(model)
    p, q, g = 0.5, model.accuracy, model.discount
    hear_left = p * q + (1 - p) * (1 - q)
    post_l = p * q / hear_left
    post_r = p * (1 - q) / (1 - hear_left)
    listen = -1.0 + g * (hear_left * oracle.value(post_l) + (1 - hear_left) * oracle.value(post_r))
    assert listen == pytest.approx(oracle.value(p), abs=1e-3)


# construction


def test_make_model_builds_each_scenario():
    assert make_model("tiger", {"accuracy": 0.9}).accuracy == 0.9
    assert make_model("chain", {"flip_probs": [0.3, 0.2, 0.1]}).max_level == 2
    car = make_model("car", {"levels": 2, "max_steps": 40, "world": {"obstacles": []}})
    assert car.max_level == 2 and car.max_steps == 40 and car.world.obstacles == ()
    assert make_model("pendulum", {"levels": 2}).n_levels == 3


@pytest.mark.parametrize("name, options", [
    ("maze", {}),
    ("tiger", {"colour": "red"}),
    ("car", {"bogus": 1}),
    ("car", {"world": {"beacons": []}}),
])
def test_make_model_rejects(name, options):
    with pytest.raises(ConfigError):
        make_model(name, options)


def test_noise_scale_copy():
    model = PendulumTorque()
    louder = model.with_noise_scale(2.0)
    assert louder.params.sigma_torque == 2 * model.params.sigma_torque
    assert replace(louder.params, sigma_torque=model.params.sigma_torque,
                   sigma_angle=model.params.sigma_angle,
                   sigma_velocity=model.params.sigma_velocity) == model.params


def test_sample_noise_in_unit_cube():
    model = CarNavigation()
    psi = model.sample_noise(np.random.default_rng(0))
    assert len(psi) == model.noise_dim and all(0.0 <= u < 1.0 for u in psi)
