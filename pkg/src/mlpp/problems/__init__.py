"""Benchmark problems and construction from config dictionaries."""

from __future__ import annotations

import dataclasses
import math

from mlpp.core import LevelSchedule, PomdpModel
from mlpp.problems.car import BeaconMap, CarNavigation, CarParams
from mlpp.problems.chain import ChainModel
from mlpp.problems.pendulum import PendulumParams, PendulumTorque
from mlpp.problems.tiger import TigerModel, TigerOracle

SCENARIOS = ("tiger", "car", "pendulum", "chain")


class ConfigError(ValueError):
    """A scenario or experiment configuration that cannot be used."""


def _schedule(section: dict, default: LevelSchedule) -> LevelSchedule:
    return LevelSchedule(float(section.pop("c1", default.c1)),
                         float(section.pop("c2", default.c2)),
                         int(section.pop("levels", default.max_level)))


def _params(cls, section: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - names)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    out = {}
    for key, value in section.items():
        out[key] = tuple(value) if isinstance(value, list) else value
    return cls(**out)


def make_model(name: str, options: dict | None = None) -> PomdpModel:
    """Build a scenario model from its name and a flat option dict."""
    options = dict(options or {})
    try:
        if name == "tiger":
            return TigerModel(**options)
        if name == "chain":
            if "flip_probs" in options:
                options["flip_probs"] = tuple(options["flip_probs"])
            return ChainModel(**options)
        if name == "car":
            schedule = _schedule(options, CarParams.schedule)
            world = options.pop("world", None)
            params = _params(CarParams, options)
            params = dataclasses.replace(params, schedule=schedule)
            if world is not None:
                params = dataclasses.replace(params, world=BeaconMap.from_dict(world))
            return CarNavigation(params)
        if name == "pendulum":
            schedule = _schedule(options, PendulumParams.schedule)
            params = dataclasses.replace(_params(PendulumParams, options), schedule=schedule)
            return PendulumTorque(params)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad options for scenario {name!r}: {exc}") from exc
    raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def support_violations(model: PomdpModel, tol: float = 0.0) -> list[tuple]:
    """Enumerate ``(s, a, s', o, l)`` with positive mass at level ``L`` but not at ``l``.

    Needs a discrete model exposing ``states()`` and
    ``transition_distribution(level, s, a)``. Positive one-step mass at every
    level is enough for every finite path to keep positive mass.
    """
    bad = []
    top = model.max_level
    for s in model.states():
        if model.is_terminal(s):
            continue
        for a in model.actions:
            ref = model.transition_distribution(top, s, a)
            for l in range(top):
                dist = model.transition_distribution(l, s, a)
                for (s2, o), p in ref.items():
                    if p > tol and not dist.get((s2, o), 0.0) > tol:
                        bad.append((s, a, s2, o, l))
    return bad


def distribution_sums_to_one(model: PomdpModel) -> bool:
    return all(math.isclose(sum(model.transition_distribution(l, s, a).values()), 1.0)
               for l in range(model.n_levels) for s in model.states()
               if not model.is_terminal(s) for a in model.actions)


__all__ = [
    "SCENARIOS", "ConfigError", "make_model", "support_violations", "distribution_sums_to_one",
    "TigerModel", "TigerOracle", "ChainModel", "CarNavigation", "CarParams", "BeaconMap",
    "PendulumTorque", "PendulumParams",
]
