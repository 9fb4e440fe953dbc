import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlpp.problems import CarNavigation
from mlpp.tree import (
    Episode,
    HistoryNode,
    NoPlanError,
    RunningStats,
    TreeError,
    backup_difference,
    backup_episode,
    best_action,
    check_counts,
    child,
    common_prefix,
    correction_weight,
    episode_value,
    node_to_dict,
    q_hat,
    ucb1_select,
)


def _path(root, actions, keys):
    nodes, h = [], root
    for a, k in zip(actions, keys):
        nodes.append(h)
        h = h.child(a, k)
    return nodes


def _episode(root, level, actions, rewards, keys=None, tail=0.0):
    keys = keys if keys is not None else [0] * len(actions)
    return Episode(level=level, actions=list(actions), rewards=list(rewards),
                   observations=list(keys), nodes=_path(root, actions, keys), tail=tail)


def test_child_created_once():
    root = HistoryNode(2, 2)
    c = child(root, 1, "x")
    assert c is child(root, 1, "x")
    assert c.depth == 1 and c.visits == [0, 0] and c.q0 == [0.0, 0.0]
    assert child(root, 0, "x") is not c


def test_car_observations_share_cell():
    car = CarNavigation()
    root = HistoryNode(car.n_actions, car.n_levels)
    a = root.child(0, car.obs_key((0.51, 1.02)))
    assert a is root.child(0, car.obs_key((0.52, 1.03)))
    assert a is not root.child(0, car.obs_key((0.80, 1.02)))


@pytest.mark.parametrize("rewards, tail, g, k, expected", [
    ([1.0, 2.0, 2.0], 0.0, 1.0, 0, 5.0),
    ([-1.0, -1.0, 1000.0], 0.0, 0.98, 0, 958.42),
    ([1.0, 2.0, 2.0], 7.5, 0.5, 3, 7.5),
    ([1.0, 2.0], 4.0, 0.5, 1, 4.0),
])
def test_episode_value(rewards, tail, g, k, expected):
    e = Episode(level=0, rewards=rewards, actions=[0] * len(rewards), tail=tail)
    assert episode_value(e, k, g) == pytest.approx(expected, abs=1e-9)


def test_episode_value_index_range():
    e = Episode(level=0, rewards=[1.0], actions=[0])
    with pytest.raises(IndexError):
        episode_value(e, 2, 0.9)


def test_backup_running_mean():
    root = HistoryNode(2, 1)
    backup_episode(_episode(root, 0, [1], [7.0]), 1.0)
    backup_episode(_episode(root, 0, [1], [3.0]), 1.0)
    assert root.q0[1] == pytest.approx(5.0)
    assert root.action_visits[0] == [0, 2] and root.visits[0] == 2
    assert q_hat(root, 1) == pytest.approx(5.0)


def test_backup_updates_whole_path():
    root = HistoryNode(1, 1)
    backup_episode(_episode(root, 0, [0, 0, 0], [1.0, 1.0, 1.0], tail=2.0), 0.5)
    nodes = list(root.iter_nodes())
    assert len(nodes) == 4
    assert check_counts(root)
    assert root.q0[0] == pytest.approx(1 + 0.5 + 0.25 + 0.125 * 2)


def test_difference_of_identical_pair_is_zero():
    root = HistoryNode(2, 2)
    e = _episode(root, 1, [0, 1], [1.0, 2.0])
    c = _episode(root, 0, [0, 1], [1.0, 2.0])
    assert backup_difference(e, c, 1, 0.9) == 2
    n, mean, var = root.diff_stats(1, 0)
    assert n == 1 and mean == 0.0 and math.isnan(var)
    assert root.visits[1] == 1 and root.action_visits[1][0] == 1


def test_difference_stops_at_divergence():
    root = HistoryNode(1, 2)
    fine = _episode(root, 1, [0, 0, 0, 0], [1.0] * 4, keys=[0, 0, 0, 0])
    coarse = _episode(root, 0, [0, 0, 0, 0], [1.0] * 4, keys=[0, 0, 1, 1])
    assert common_prefix(fine, coarse) == 3
    backup_difference(fine, coarse, 1, 0.9)
    counted = [node.diff_n[1][0] for node in fine.nodes]
    assert counted == [1, 1, 1, 0]
    # level-1 visit counts run along the whole fine path
    assert [node.visits[1] for node in fine.nodes] == [1, 1, 1, 1]


def test_difference_with_shorter_coarse_episode():
    # the coarse replay hit a terminal state one step earlier
    root = HistoryNode(1, 2)
    fine = _episode(root, 1, [0, 0, 0], [0.0, 0.0, 10.0])
    coarse = _episode(root, 0, [0, 0], [0.0, -5.0])
    assert backup_difference(fine, coarse, 1, 1.0) == 2
    assert root.diff_mean[1][0] == pytest.approx(15.0)


def test_difference_without_shared_edge_raises():
    root = HistoryNode(2, 2)
    fine = _episode(root, 1, [0], [1.0])
    coarse = _episode(root, 0, [1], [1.0])
    with pytest.raises(TreeError):
        backup_difference(fine, coarse, 1, 0.9)


def test_missing_tree_path_raises():
    with pytest.raises(TreeError):
        backup_episode(Episode(level=0, actions=[0], rewards=[1.0]), 0.9)


def test_q_hat_adds_weighted_correction():
    root = HistoryNode(1, 2)
    backup_episode(_episode(root, 0, [0], [4.0]), 1.0)
    # ten differences of mean 2 and variance 10 give weight 1/2
    for x in [5.0, -1.0] * 5:
        fine = _episode(root, 1, [0], [x])
        coarse = _episode(root, 0, [0], [0.0])
        backup_difference(fine, coarse, 1, 1.0)
    n, mean, var = root.diff_stats(1, 0)
    assert (n, mean) == (10, pytest.approx(2.0)) and var == pytest.approx(10.0)
    assert root.weight(1, 0) == pytest.approx(0.5)
    assert q_hat(root, 0) == pytest.approx(4.0 + 1.0)


def test_q_hat_without_corrections_is_level0_mean():
    root = HistoryNode(2, 3)
    backup_episode(_episode(root, 0, [1], [6.0]), 1.0)
    assert q_hat(root, 1) == 6.0


def test_q_hat_unvisited_raises():
    with pytest.raises(NoPlanError):
        q_hat(HistoryNode(2, 1), 0)


def test_ucb_level0_untried_uniform():
    rng = np.random.default_rng(0)
    root = HistoryNode(4, 2)
    picks = [ucb1_select(root, 0, 1.0, rng) for _ in range(4000)]
    assert all(flag for _, flag in picks)
    counts = np.bincount([a for a, _ in picks], minlength=4)
    assert np.all(np.abs(counts - 1000) < 3 * math.sqrt(4000 * 0.25 * 0.75))


def test_ucb_finer_level_needs_visited_action():
    root = HistoryNode(3, 2)
    assert ucb1_select(root, 1, 1.0, None) == (None, False)
    backup_episode(_episode(root, 0, [2], [1.0]), 1.0)
    assert ucb1_select(root, 1, 1.0, None) == (2, False)


def test_ucb_greedy_without_exploration():
    root = HistoryNode(3, 1)
    for a, r in [(0, 1.0), (1, 5.0), (2, 3.0)]:
        backup_episode(_episode(root, 0, [a], [r]), 1.0)
    assert ucb1_select(root, 0, 0.0, None) == (1, False)


def test_best_action_ties_lowest_index():
    root = HistoryNode(3, 1)
    for a, r in [(0, 3.0), (1, 9.0), (2, 9.0)]:
        backup_episode(_episode(root, 0, [a], [r]), 1.0)
    assert best_action(root) == 1


def test_best_action_without_visits():
    with pytest.raises(NoPlanError):
        best_action(HistoryNode(2, 1))


def test_running_stats_match_two_pass():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        xs = rng.normal(rng.normal(0, 100), rng.uniform(0.1, 50), size=int(rng.integers(2, 40)))
        rs = RunningStats()
        for x in xs:
            rs.push(float(x))
        assert rs.mean == pytest.approx(xs.mean(), rel=1e-9, abs=1e-9)
        assert rs.variance == pytest.approx(xs.var(ddof=1), rel=1e-9)


@given(st.integers(0, 10**6), st.floats(0.0, 1e12))
def test_weight_in_unit_interval(n, var):
    w = correction_weight(n, var)
    assert 0.0 <= w <= 1.0
    if n >= 1:
        assert w > 0.0 or var / n > 1e300


@settings(max_examples=20)
@given(st.floats(0.0, 1e3))
def test_weight_tends_to_one(var):
    assert correction_weight(10**12, var) == pytest.approx(1.0, abs=1e-8)


def test_node_dump_is_json():
    root = HistoryNode(2, 2)
    backup_episode(_episode(root, 0, [0, 1], [1.0, 2.0], keys=["a", "b"]), 0.9)
    text = json.dumps(node_to_dict(root))
    loaded = json.loads(text)
    assert loaded["visits"] == [1, 0]
    assert loaded["children"][0]["path"] == "/0:'a'"
