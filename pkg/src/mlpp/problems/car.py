"""CarNavigation-lite: a nonholonomic car among box obstacles, localised by
beacon signal strength and a velocity sensor.

Every level advances the same 0.4 s per planner action; level ``l`` gets
there with ``2**l`` Euler substeps of ``0.4 * 2**-l`` seconds. Collision and
goal tests run at substep endpoints, so coarse levels can skip over thin
walls. The control noise drawn for an action is held for all its substeps.

Noise vector layout: ``[accel, steer, beacon choice, signal, speed]``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from mlpp.core import LevelSchedule, ObservationSpace, PomdpModel, StateSpace, std_normal, wrap_angle

AXLE = 0.11
ACCELERATIONS = (-1.0, 0.0, 1.0)
STEERING = (-0.5, 0.0, 0.5)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Box:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def intersects_segment(self, x0, y0, x1, y1) -> bool:
        return self.entry(x0, y0, x1, y1) is not None

    def entry(self, x0, y0, x1, y1) -> float | None:
        """Liang-Barsky clip: fraction of the segment at which it first meets
        the box, or ``None`` if it misses."""
        t0, t1 = 0.0, 1.0
        dx, dy = x1 - x0, y1 - y0
        for p, q in ((-dx, x0 - self.xmin), (dx, self.xmax - x0),
                     (-dy, y0 - self.ymin), (dy, self.ymax - y0)):
            if p == 0.0:
                if q < 0.0:
                    return None
            else:
                t = q / p
                if p < 0.0:
                    if t > t1:
                        return None
                    t0 = max(t0, t)
                else:
                    if t < t0:
                        return None
                    t1 = min(t1, t)
        return t0 if t0 <= t1 else None

    def inflated(self, margin: float) -> Box:
        return Box(self.xmin - margin, self.ymin - margin, self.xmax + margin, self.ymax + margin)


@dataclass(frozen=True)
class BeaconMap:
    width: float = 8.0
    height: float = 8.0
    beacons: tuple = ((1.5, 4.5), (6.0, 6.5))
    obstacles: tuple = (Box(3.0, 3.3, 12.0, 3.6),)
    goal: tuple = (7.0, 7.0, 0.6)
    # leaving the arena counts as a collision only on bounded maps
    bounded: bool = False

    def __post_init__(self):
        if not self.beacons:
            raise ValueError("need at least one beacon")
        gx, gy, gr = self.goal
        for box in self.obstacles:
            cx = min(max(gx, box.xmin), box.xmax)
            cy = min(max(gy, box.ymin), box.ymax)
            if math.hypot(gx - cx, gy - cy) <= gr:
                raise ValueError("goal region overlaps an obstacle")

    def in_collision(self, x: float, y: float) -> bool:
        if self.bounded and not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
            return True
        for box in self.obstacles:
            if box.xmin <= x <= box.xmax and box.ymin <= y <= box.ymax:
                return True
        return False

    def in_goal(self, x: float, y: float) -> bool:
        gx, gy, gr = self.goal
        return (x - gx) ** 2 + (y - gy) ** 2 <= gr * gr

    def segment_clear(self, x0, y0, x1, y1, margin: float = 0.0) -> bool:
        for box in self.obstacles:
            if (box.inflated(margin) if margin else box).intersects_segment(x0, y0, x1, y1):
                return False
        return True

    @classmethod
    def from_dict(cls, data: dict) -> BeaconMap:
        kwargs = dict(data)
        if "beacons" in kwargs:
            kwargs["beacons"] = tuple(tuple(b) for b in kwargs["beacons"])
        if "obstacles" in kwargs:
            kwargs["obstacles"] = tuple(Box(*b) for b in kwargs["obstacles"])
        if "goal" in kwargs:
            kwargs["goal"] = tuple(kwargs["goal"])
        return cls(**kwargs)


class GeodesicField:
    """Shortest obstacle-avoiding distance to the goal centre.

    Exact through a visibility graph over slightly inflated obstacle corners;
    tabulated on a grid and bilinearly interpolated for speed. Points with a
    clear line to the goal use the straight-line distance directly.
    """

    def __init__(self, world: BeaconMap, spacing: float = 0.1, margin: float = 0.8):
        self.world = world
        self.margin = margin
        gx, gy, _ = world.goal
        # sight lines keep just under ``margin`` away from walls so that
        # corner-to-corner edges along an inflated box stay visible
        self._clearance = 0.99 * margin
        corners = []
        for box in world.obstacles:
            b = box.inflated(margin)
            for cx, cy in ((b.xmin, b.ymin), (b.xmin, b.ymax), (b.xmax, b.ymin), (b.xmax, b.ymax)):
                if 0.0 < cx < world.width and 0.0 < cy < world.height and not world.in_collision(cx, cy):
                    corners.append((cx, cy))
        self.corners = corners
        # Dijkstra from the goal over the visibility graph
        nodes = [(gx, gy)] + corners
        dist = [math.inf] * len(nodes)
        dist[0] = 0.0
        heap = [(0.0, 0)]
        while heap:
            d, i = heapq.heappop(heap)
            if d > dist[i]:
                continue
            xi, yi = nodes[i]
            for j, (xj, yj) in enumerate(nodes):
                if j != i and world.segment_clear(xi, yi, xj, yj, self._clearance):
                    nd = d + math.hypot(xj - xi, yj - yi)
                    if nd < dist[j]:
                        dist[j] = nd
                        heapq.heappush(heap, (nd, j))
        self.corner_dist = dist[1:]
        self.spacing = spacing
        self.nx = int(round(world.width / spacing)) + 1
        self.ny = int(round(world.height / spacing)) + 1
        table = np.empty((self.nx, self.ny))
        for i in range(self.nx):
            for j in range(self.ny):
                table[i, j] = self.exact(i * spacing, j * spacing)
        finite = table[np.isfinite(table)]
        table[~np.isfinite(table)] = finite.max() if finite.size else 0.0
        self.table = table.tolist()

    def exact(self, x: float, y: float) -> float:
        """Shortest route keeping clearance; points already too close to a wall
        fall back to plain visibility for their first leg."""
        for clearance in (self._clearance, 0.0):
            d = self._route(x, y, clearance)
            if d < math.inf:
                return d
        return math.inf

    def _route(self, x, y, clearance):
        gx, gy, _ = self.world.goal
        world = self.world
        if world.segment_clear(x, y, gx, gy, clearance):
            return math.hypot(gx - x, gy - y)
        best = math.inf
        for (cx, cy), d in zip(self.corners, self.corner_dist):
            if d < math.inf and world.segment_clear(x, y, cx, cy, clearance):
                best = min(best, math.hypot(cx - x, cy - y) + d)
        return best

    def __call__(self, x: float, y: float) -> float:
        gx, gy, _ = self.world.goal
        if self.world.segment_clear(x, y, gx, gy, self._clearance):
            return math.hypot(gx - x, gy - y)
        fx = min(max(x / self.spacing, 0.0), self.nx - 1.000001)
        fy = min(max(y / self.spacing, 0.0), self.ny - 1.000001)
        i, j = int(fx), int(fy)
        tx, ty = fx - i, fy - j
        t = self.table
        return ((1 - tx) * ((1 - ty) * t[i][j] + ty * t[i][j + 1])
                + tx * ((1 - ty) * t[i + 1][j] + ty * t[i + 1][j + 1]))


@lru_cache(maxsize=16)
def _geodesic(world: BeaconMap) -> GeodesicField:
    return GeodesicField(world)


@dataclass(frozen=True)
class CarParams:
    world: BeaconMap = field(default_factory=BeaconMap)
    schedule: LevelSchedule = LevelSchedule(0.4, 1.0, 3)
    start: tuple = (1.0, 1.0, math.pi / 4, 0.5)
    sigma_accel: float = 0.2
    sigma_steer: float = 0.02
    sigma_signal: float = 0.02
    sigma_speed: float = 0.05
    goal_reward: float = 10000.0
    collision_reward: float = -500.0
    step_reward: float = -1.0
    discount: float = 0.99
    max_steps: int = 500
    heuristic_speed: float = 1.5
    # "geodesic" routes around boxes; "euclidean" ignores them
    heuristic_distance: str = "geodesic"
    # test walls along each substep segment rather than only at its end
    swept_collisions: bool = False
    # likewise detect the goal when a substep passes through the disc
    swept_goal: bool = False
    obs_cell: tuple = (0.25, 0.5)


def car_dynamics(s, accel: float, steer: float, noise, dt: float):
    """One Euler step of the car; ``noise = (accel_noise, steer_noise)``."""
    x, y, theta, v = s
    return (x + dt * v * math.cos(theta),
            y + dt * v * math.sin(theta),
            theta + dt * math.tan(steer + noise[1]) / AXLE,
            v + dt * (accel + noise[0]))


def _disc_entry(x0, y0, x1, y1, cx, cy, r) -> float | None:
    """First ``t`` in [0, 1] where the segment enters the disc, if any."""
    dx, dy = x1 - x0, y1 - y0
    fx, fy = x0 - cx, y0 - cy
    a = dx * dx + dy * dy
    if a == 0.0:
        return None
    b = fx * dx + fy * dy
    disc = b * b - a * (fx * fx + fy * fy - r * r)
    if disc < 0.0:
        return None
    t = (-b - math.sqrt(disc)) / a
    return t if 0.0 <= t <= 1.0 else None


def beacon_probabilities(world: BeaconMap, x: float, y: float) -> list[float]:
    """Selection probability of each beacon, proportional to inverse distance."""
    dists = [math.hypot(x - bx, y - by) for bx, by in world.beacons]
    for i, d in enumerate(dists):
        if d == 0.0:
            return [1.0 if j == i else 0.0 for j in range(len(dists))]
    inv = [1.0 / d for d in dists]
    total = sum(inv)
    return [w / total for w in inv]


def car_observe(world: BeaconMap, s, noise) -> tuple[float, float]:
    """``noise = (beacon_uniform, signal_noise, speed_noise)`` with the last two
    already scaled."""
    x, y, _, v = s
    probs = beacon_probabilities(world, x, y)
    u = noise[0]
    idx = len(probs) - 1
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            idx = i
            break
    bx, by = world.beacons[idx]
    signal = 1.0 / ((x - bx) ** 2 + (y - by) ** 2 + 1.0)
    return signal + noise[1], v + noise[2]


class CarNavigation(PomdpModel):
    name = "car"
    action_labels = tuple(f"a={a:+g},phi={p:+g}" for a in ACCELERATIONS for p in STEERING)
    observation_space = ObservationSpace(dim=2)

    def __init__(self, params: CarParams | None = None, **overrides):
        params = params or CarParams()
        if overrides:
            params = replace(params, **overrides)
        self.params = params
        sched = params.schedule
        super().__init__(n_actions=len(ACCELERATIONS) * len(STEERING), max_level=sched.max_level,
                         noise_dim=5, discount=params.discount, max_steps=params.max_steps)
        world = params.world
        self.world = world
        self.state_space = StateSpace(dim=4, low=(0.0, 0.0, -math.pi, -math.inf),
                                      high=(world.width, world.height, math.pi, math.inf))
        self.duration = sched.parameter(0)
        self.substeps = []
        self.dts = []
        for l in range(sched.max_level + 1):
            n = max(1, int(round(self.duration / sched.parameter(l))))
            self.substeps.append(n)
            self.dts.append(self.duration / n)
        self.controls = [(a, p) for a in ACCELERATIONS for p in STEERING]
        self.geodesic = _geodesic(world)

    def transition(self, level, s, a, psi):
        p = self.params
        accel, steer = self.controls[a]
        accel += p.sigma_accel * std_normal(psi[0])
        tan_steer = math.tan(steer + p.sigma_steer * std_normal(psi[1])) / AXLE
        dt = self.dts[level]
        x, y, theta, v = s
        world = self.world
        boxes = world.obstacles
        bounded = world.bounded
        w, h = world.width, world.height
        gx, gy, gr = world.goal
        gr2 = gr * gr
        swept = p.swept_collisions
        swept_goal = p.swept_goal
        for _ in range(self.substeps[level]):
            x0, y0 = x, y
            x, y, theta, v = (x + dt * v * math.cos(theta), y + dt * v * math.sin(theta),
                              theta + dt * tan_steer, v + dt * accel)
            hit = False
            for b in boxes:
                if swept:
                    t = b.entry(x0, y0, x, y)
                    if t is not None:
                        # stop at the contact point, snapped onto the box
                        x = min(max(x0 + t * (x - x0), b.xmin), b.xmax)
                        y = min(max(y0 + t * (y - y0), b.ymin), b.ymax)
                        hit = True
                        break
                elif b.xmin <= x <= b.xmax and b.ymin <= y <= b.ymax:
                    hit = True
                    break
            if hit:
                break
            if bounded and not (0.0 <= x <= w and 0.0 <= y <= h):
                break
            if (x - gx) ** 2 + (y - gy) ** 2 <= gr2:
                break
            if swept_goal:
                t = _disc_entry(x0, y0, x, y, gx, gy, gr)
                if t is not None:
                    x, y = x0 + t * (x - x0), y0 + t * (y - y0)
                    # pull the contact point just inside the disc
                    x, y = gx + (x - gx) * (1 - 1e-9), gy + (y - gy) * (1 - 1e-9)
                    break
        s2 = (x, y, wrap_angle(theta), v)
        o = car_observe(world, s2, (psi[2], p.sigma_signal * std_normal(psi[3]),
                                    p.sigma_speed * std_normal(psi[4])))
        return s2, o

    def reward(self, s, a):
        x, y = s[0], s[1]
        if self.world.in_collision(x, y):
            return self.params.collision_reward
        if self.world.in_goal(x, y):
            return self.params.goal_reward
        return self.params.step_reward

    def step_reward(self, s, a, s_next):
        return self.reward(s_next, a)

    def is_terminal(self, s):
        x, y = s[0], s[1]
        return self.world.in_goal(x, y) or self.world.in_collision(x, y)

    def value_from_distance(self, distance: float) -> float:
        """Discounted value of driving ``distance`` metres at the heuristic speed."""
        p = self.params
        k = max(distance, 0.0) / (p.heuristic_speed * self.duration)
        gk = p.discount ** k
        return gk * p.goal_reward + p.step_reward * (1.0 - gk) / (1.0 - p.discount)

    def heuristic(self, s):
        if self.is_terminal(s):
            return 0.0
        gx, gy, gr = self.world.goal
        if self.params.heuristic_distance == "euclidean":
            return self.value_from_distance(math.hypot(s[0] - gx, s[1] - gy) - gr)
        return self.value_from_distance(self.geodesic(s[0], s[1]) - gr)

    def obs_likelihood(self, o, s_next, a):
        p = self.params
        x, y, _, v = s_next
        signal, speed = o
        ss, sv = p.sigma_signal, p.sigma_speed
        probs = beacon_probabilities(self.world, x, y)
        dens = 0.0
        for prob, (bx, by) in zip(probs, self.world.beacons):
            if prob:
                z = (signal - 1.0 / ((x - bx) ** 2 + (y - by) ** 2 + 1.0)) / ss
                dens += prob * math.exp(-0.5 * z * z)
        z = (speed - v) / sv
        return dens * math.exp(-0.5 * z * z) / (ss * sv * _SQRT_2PI ** 2)

    def obs_key(self, o):
        cs, cv = self.params.obs_cell
        return (math.floor(o[0] / cs), math.floor(o[1] / cv))

    def initial_state(self, rng):
        return tuple(float(v) for v in self.params.start)

    def initial_particles(self, n, rng=None):
        return [self.initial_state(rng)] * n

    def outcome(self, s):
        if self.world.in_goal(s[0], s[1]):
            return "goal"
        if self.world.in_collision(s[0], s[1]):
            return "collision"
        return "other-terminal"

    def step_cost(self, level):
        return float(self.substeps[level])

    def with_noise_scale(self, factor):
        p = self.params
        return CarNavigation(replace(p, sigma_accel=p.sigma_accel * factor,
                                     sigma_steer=p.sigma_steer * factor,
                                     sigma_signal=p.sigma_signal * factor,
                                     sigma_speed=p.sigma_speed * factor))
