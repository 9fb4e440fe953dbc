"""History tree with per-level statistics.

Every node keeps, per level ``l``, the visit counts ``N_l(h)`` and
``N_l(h, a)``. Level 0 additionally holds the running mean of episode returns,
and every level ``l >= 1`` a streaming mean/M2 accumulator of adjacent-level
return differences. The action value used everywhere is the level-0 mean plus
the variance-weighted corrections, cached per action and refreshed on backup.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterator

from mlpp.core import Action

INF = float("inf")


class TreeError(RuntimeError):
    """An episode does not describe a path of the tree it is backed up into."""


class NoPlanError(RuntimeError):
    """No action has been visited at the node."""


class RunningStats:
    """Streaming mean and variance (Welford)."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    @property
    def variance(self) -> float:
        """Unbiased sample variance; ``nan`` below two samples."""
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan


def correction_weight(n: int, variance: float) -> float:
    """``(1 + variance / n) ** -1``, with ``n / (n + 1)`` before a variance exists."""
    if n < 2:
        return n / (n + 1.0)
    return 1.0 / (1.0 + variance / n)


class HistoryNode:
    """A node of the search tree; children are keyed by ``(action, obs_key)``."""

    __slots__ = ("depth", "children", "visits", "action_visits", "q0",
                 "diff_n", "diff_mean", "diff_m2", "qhat")

    def __init__(self, n_actions: int, n_levels: int, depth: int = 0):
        self.depth = depth
        self.children: dict[tuple[Action, Hashable], HistoryNode] = {}
        self.visits = [0] * n_levels
        self.action_visits = [[0] * n_actions for _ in range(n_levels)]
        self.q0 = [0.0] * n_actions
        # index 0 unused so that level l lives at index l
        self.diff_n = [[0] * n_actions for _ in range(n_levels)]
        self.diff_mean = [[0.0] * n_actions for _ in range(n_levels)]
        self.diff_m2 = [[0.0] * n_actions for _ in range(n_levels)]
        self.qhat = [0.0] * n_actions

    @property
    def n_actions(self) -> int:
        return len(self.q0)

    @property
    def n_levels(self) -> int:
        return len(self.visits)

    def child(self, a: Action, key: Hashable) -> HistoryNode:
        edge = (a, key)
        node = self.children.get(edge)
        if node is None:
            node = HistoryNode(len(self.q0), len(self.visits), self.depth + 1)
            self.children[edge] = node
        return node

    def visited_actions(self) -> list[Action]:
        """``A'(h)``: actions taken at least once by a level-0 episode."""
        n0 = self.action_visits[0]
        return [a for a in range(len(n0)) if n0[a]]

    def diff_stats(self, level: int, a: Action) -> tuple[int, float, float]:
        """``(count, mean, variance)`` of the level-``level`` difference stream."""
        n = self.diff_n[level][a]
        var = self.diff_m2[level][a] / (n - 1) if n > 1 else math.nan
        return n, self.diff_mean[level][a], var

    def weight(self, level: int, a: Action) -> float:
        n, _, var = self.diff_stats(level, a)
        return correction_weight(n, var)

    def refresh(self, a: Action) -> None:
        q = self.q0[a]
        diff_n = self.diff_n
        for l in range(1, len(diff_n)):
            n = diff_n[l][a]
            if n:
                if n < 2:
                    w = n / (n + 1.0)
                else:
                    w = 1.0 / (1.0 + self.diff_m2[l][a] / (n - 1) / n)
                q += w * self.diff_mean[l][a]
        self.qhat[a] = q

    def q_hat(self, a: Action) -> float:
        if not self.action_visits[0][a]:
            raise NoPlanError(f"action {a} has no level-0 visit at this node")
        return self.qhat[a]

    def iter_nodes(self) -> Iterator[HistoryNode]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children.values())


def child(h: HistoryNode, a: Action, key: Hashable) -> HistoryNode:
    return h.child(a, key)


def q_hat(h: HistoryNode, a: Action) -> float:
    return h.q_hat(a)


@dataclass
class Episode:
    """Quadruples ``(s, a, o, r)`` plus the final ``(s, -, -, tail)`` entry.

    ``states`` has one more entry than ``actions``: the state after the last
    step. ``nodes[i]`` is the history node at which ``actions[i]`` was taken.
    """

    level: int
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    psis: list = field(default_factory=list)
    nodes: list = field(default_factory=list)
    tail: float = 0.0
    stop: str = "terminal"
    terminal: bool = False

    def __len__(self) -> int:
        return len(self.actions)

    def values(self, discount: float) -> list[float]:
        """``[V_0, ..., V_n]`` where ``V_n`` is the tail entry."""
        n = len(self.rewards)
        out = [0.0] * (n + 1)
        v = self.tail
        out[n] = v
        rewards = self.rewards
        for k in range(n - 1, -1, -1):
            v = rewards[k] + discount * v
            out[k] = v
        return out


def episode_value(e: Episode, k: int, discount: float) -> float:
    """Discounted return of ``e`` from quadruple ``k`` (0-based, tail at ``len(e)``)."""
    if not 0 <= k <= len(e):
        raise IndexError(f"k={k} outside 0..{len(e)}")
    return e.values(discount)[k]


def _check_path(e: Episode) -> None:
    if len(e.nodes) != len(e.actions):
        raise TreeError("episode carries no tree path for its actions")


def backup_episode(e: Episode, discount: float) -> None:
    """Fold a level-0 episode into ``N_0`` counts and the level-0 means."""
    _check_path(e)
    v = e.tail
    rewards, actions, nodes = e.rewards, e.actions, e.nodes
    for k in range(len(actions) - 1, -1, -1):
        v = rewards[k] + discount * v
        node = nodes[k]
        a = actions[k]
        node.visits[0] += 1
        counts = node.action_visits[0]
        counts[a] += 1
        q0 = node.q0
        q0[a] += (v - q0[a]) / counts[a]
        node.refresh(a)


def common_prefix(fine: Episode, coarse: Episode) -> int:
    """Number of leading action edges shared by a correlated pair."""
    m = min(len(fine.actions), len(coarse.actions))
    k = 0
    fn, cn = fine.nodes, coarse.nodes
    while k < m and fn[k] is cn[k]:
        k += 1
    return k


def backup_difference(fine: Episode, coarse: Episode, level: int, discount: float) -> int:
    """Fold a correlated pair into the level-``level`` difference statistics.

    Every common edge ``(h, a)`` receives ``V_k(fine) - V_k(coarse)``. Edges
    past the divergence point get no difference sample, since ``V_k`` at the
    deepest common edge already contains both suffixes; the fine episode's
    path receives the level-``level`` visit counts (one count per pair).
    Returns the length of the common prefix.
    """
    if level < 1:
        raise ValueError("difference backups need level >= 1")
    _check_path(fine)
    _check_path(coarse)
    if not fine.actions:
        return 0
    if (not coarse.actions or coarse.nodes[0] is not fine.nodes[0]
            or coarse.actions[0] != fine.actions[0]):
        raise TreeError("correlated episodes share no first action edge")
    vf = fine.values(discount)
    vc = coarse.values(discount)
    common = common_prefix(fine, coarse)
    actions = fine.actions
    for k in range(common):
        node = fine.nodes[k]
        a = actions[k]
        x = vf[k] - vc[k]
        n_row = node.diff_n[level]
        mean_row = node.diff_mean[level]
        n = n_row[a] + 1
        n_row[a] = n
        delta = x - mean_row[a]
        mean_row[a] += delta / n
        node.diff_m2[level][a] += delta * (x - mean_row[a])
    for k in range(len(actions)):
        node = fine.nodes[k]
        node.visits[level] += 1
        node.action_visits[level][actions[k]] += 1
    for k in range(common):
        fine.nodes[k].refresh(actions[k])
    return common


def ucb1_select(h: HistoryNode, level: int, c: float, rng) -> tuple[Action | None, bool]:
    """Pick an action at ``h`` for an episode on ``level``.

    Returns ``(action, unvisited)``. On level 0 an untried action is chosen
    uniformly at random and flagged. Finer levels only see ``A'(h)`` and return
    ``(None, False)`` when it is empty. Ties go to the lowest action index.
    """
    if level == 0:
        counts = h.action_visits[0]
        if 0 in counts:
            untried = [a for a in range(len(counts)) if not counts[a]]
            return untried[int(rng.random() * len(untried))], True
        pool = range(len(counts))
        total = h.visits[0]
    else:
        n0 = h.action_visits[0]
        counts = h.action_visits[level]
        pool = [a for a in range(len(n0)) if n0[a]]
        if not pool:
            return None, False
        for a in pool:
            if not counts[a]:
                return a, False
        total = h.visits[level]
    qhat = h.qhat
    log_total = math.log(total)
    best = -1
    best_score = -INF
    for a in pool:
        score = qhat[a] + c * math.sqrt(log_total / counts[a])
        if score > best_score:
            best, best_score = a, score
    return best, False


def best_action(h: HistoryNode) -> Action:
    """``argmax`` of the weighted Q estimate over ``A'(h)``, lowest index on ties."""
    pool = h.visited_actions()
    if not pool:
        raise NoPlanError("no visited action at the root")
    best = pool[0]
    for a in pool[1:]:
        if h.qhat[a] > h.qhat[best]:
            best = a
    return best


def node_to_dict(h: HistoryNode, max_depth: int | None = None, path: str = "") -> dict[str, Any]:
    """JSON-ready snapshot of ``h`` and (optionally depth-limited) descendants."""
    actions = []
    for a in range(h.n_actions):
        row = {
            "action": a,
            "counts": [h.action_visits[l][a] for l in range(h.n_levels)],
            "q0": h.q0[a],
            "q_hat": h.qhat[a],
            "diff": [
                {"level": l, "n": n, "mean": mean, "var": None if math.isnan(var) else var,
                 "weight": correction_weight(n, var)}
                for l in range(1, h.n_levels)
                for n, mean, var in [h.diff_stats(l, a)]
            ],
        }
        actions.append(row)
    out: dict[str, Any] = {"path": path, "depth": h.depth, "visits": list(h.visits),
                           "actions": actions, "children": []}
    if max_depth is None or max_depth > 0:
        nxt = None if max_depth is None else max_depth - 1
        for (a, key), node in sorted(h.children.items(), key=lambda kv: (kv[0][0], repr(kv[0][1]))):
            out["children"].append(node_to_dict(node, nxt, f"{path}/{a}:{key!r}"))
    return out


def dump_tree(h: HistoryNode, path, max_depth: int | None = 3) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(node_to_dict(h, max_depth), fh, indent=1)


def check_counts(h: HistoryNode) -> bool:
    """``N_l(h) == sum_a N_l(h, a)`` for every level and every node below ``h``."""
    for node in h.iter_nodes():
        for l in range(node.n_levels):
            if node.visits[l] != sum(node.action_visits[l]):
                return False
    return True
