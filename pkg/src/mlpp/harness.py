"""Config-driven experiments: benchmarks, variance studies and budget sweeps.

CSV files are written with ``\\n`` line endings and ``repr`` floats, so a rerun
with the same config and seed reproduces them byte for byte. Wall-clock
timings vary between runs and go to a separate ``*.timing.csv`` sidecar.

Benchmark columns: ``study, scenario, solver, budget, trial, seed, discounted_return,
steps, outcome, cost_per_step, episodes_per_level`` (levels joined by ``;``).

Variance columns: ``scenario, run, step, level, statistic, value, samples``
with ``statistic`` one of ``var_q`` (V[Q_l]) or ``var_diff`` (V[Q_l - Q_{l-1}]);
``run`` and ``step`` are ``mean`` on the averaged rows.

Sweep columns: ``scenario, solver, budget, trials, mean_return, std_error,
ci_low, ci_high``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mlpp.baseline import BaselineConfig, SingleLevelPlanner
from mlpp.belief import ParticleBelief
from mlpp.core import PomdpModel
from mlpp.problems import SCENARIOS, ConfigError, make_model
from mlpp.solver import (
    Budget,
    MLPPPlanner,
    SolverConfig,
    TrialResult,
    _key_fn,
    _reward_fn,
    replay_episode,
    run_trial,
)
from mlpp.tree import Episode, HistoryNode, best_action, dump_tree

log = logging.getLogger(__name__)

STUDIES = ("benchmark", "variance", "budget-sweep")
Z_95 = statistics.NormalDist().inv_cdf(0.975)

# Exploration constants tuned per scenario; a config can override them.
DEFAULT_SOLVER_OPTIONS = {
    "tiger": {"c0": 80.0},
    "chain": {"c0": 1.0},
    "car": {"c0": 300.0, "particles": 500},
    "pendulum": {"c0": 20.0, "particles": 500},
}
SOLVER_KEYS = ("c0", "c_levels", "particles", "pairs_per_iteration", "max_depth")

BENCH_HEADER = ("study", "scenario", "solver", "budget", "trial", "seed", "discounted_return",
                "steps", "outcome", "cost_per_step", "episodes_per_level")
VARIANCE_HEADER = ("scenario", "run", "step", "level", "statistic", "value", "samples")
SWEEP_HEADER = ("scenario", "solver", "budget", "trials", "mean_return", "std_error",
                "ci_low", "ci_high")


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment.

    ``solver`` is ``mlpp`` or ``baseline@<level>`` (``baseline@L`` for the
    finest level). ``solvers`` and ``budgets`` only matter for sweeps;
    ``runs``, ``samples`` and ``max_steps`` only for variance studies.
    """

    study: str = "benchmark"
    scenario: str = "tiger"
    solver: str = "mlpp"
    budget: Budget = field(default_factory=lambda: Budget("episodes", 1000))
    trials: int = 10
    seed: int = 0
    out: str | None = None
    workers: int = 1
    dump_tree: str | None = None
    scenario_options: dict = field(default_factory=dict)
    solver_options: dict = field(default_factory=dict)
    solvers: list = field(default_factory=list)
    budgets: list = field(default_factory=list)
    runs: int = 5
    samples: int = 2000
    max_steps: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; choose from {', '.join(STUDIES)}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if not isinstance(self.budget, Budget):
            self.budget = parse_budget(self.budget)
        for name in (self.solver, *self.solvers):
            parse_solver(name)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        unknown = sorted(set(self.solver_options) - set(SOLVER_KEYS))
        if unknown:
            raise ConfigError(f"unknown solver options: {', '.join(unknown)}")
        self.budgets = [b if isinstance(b, Budget) else parse_budget(b) for b in self.budgets]
        if self.study == "budget-sweep" and not self.budgets:
            raise ConfigError("a budget sweep needs a non-empty budget list")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        for section in ("variance", "sweep"):
            data.update(data.pop(section, {}) or {})
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> ExperimentConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def model(self) -> PomdpModel:
        return make_model(self.scenario, self.scenario_options)

    def options(self) -> dict:
        opts = dict(DEFAULT_SOLVER_OPTIONS.get(self.scenario, {}))
        opts.update(self.solver_options)
        return opts


def parse_budget(value) -> Budget:
    try:
        return Budget.parse(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad budget {value!r}: {exc}") from exc


def parse_solver(name: str) -> tuple[str, str | None]:
    if name == "mlpp":
        return "mlpp", None
    if name.startswith("baseline@"):
        level = name.split("@", 1)[1]
        if level == "L" or level.isdigit():
            return "baseline", level
    raise ConfigError(f"unknown solver {name!r}; use mlpp or baseline@<level>")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read a TOML or JSON experiment config."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(raw.decode("utf-8"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a table of keys")
    return ExperimentConfig.from_dict(data)


def make_planner(model: PomdpModel, solver: str, budget: Budget, options: dict):
    kind, level = parse_solver(solver)
    opts = dict(options)
    try:
        if kind == "mlpp":
            return MLPPPlanner(model, SolverConfig(budget=budget, **opts))
        lvl = model.max_level if level == "L" else int(level)
        opts.pop("c_levels", None)
        opts.pop("pairs_per_iteration", None)
        c = opts.pop("c0", 1.0)
        return SingleLevelPlanner(model, BaselineConfig(level=lvl, c=c, budget=budget, **opts))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build solver {solver!r}: {exc}") from exc


def trial_seed(master: int, trial: int) -> list[int]:
    """Seed material for one trial; identical across solvers for common random numbers."""
    return [int(master), int(trial)]


def _run_one(args) -> TrialResult:
    cfg, solver, budget, trial = args
    model = cfg.model()
    planner = make_planner(model, solver, budget, cfg.options())
    hook = None
    if cfg.dump_tree and trial == 0:
        def hook(t, root, belief, a):
            if t == 0:
                dump_tree(root, cfg.dump_tree)
    return run_trial(model, planner, trial_seed(cfg.seed, trial), on_step=hook)


def run_trials(cfg: ExperimentConfig, solver: str | None = None,
               budget: Budget | None = None) -> list[TrialResult]:
    """All trials of one (solver, budget) cell, ordered by trial id."""
    solver = solver or cfg.solver
    budget = budget or cfg.budget
    jobs = [(cfg, solver, budget, t) for t in range(cfg.trials)]
    if cfg.workers == 1 or cfg.trials == 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_run_one, jobs))


@dataclass
class Summary:
    n: int
    mean: float
    std_error: float

    @property
    def ci(self) -> tuple[float, float]:
        half = Z_95 * self.std_error
        return self.mean - half, self.mean + half


def summarize(values) -> Summary:
    values = list(values)
    n = len(values)
    mean = math.fsum(values) / n if n else math.nan
    se = statistics.stdev(values) / math.sqrt(n) if n > 1 else math.nan
    return Summary(n, mean, se)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _write(text: str, out: str | None) -> None:
    if out is None:
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_timing(out: str | None, rows) -> None:
    if out is None:
        return
    _write(_csv_text(("solver", "budget", "trial", "seconds_per_step", "seconds_total"), rows),
           str(out) + ".timing.csv")


def benchmark_rows(cfg: ExperimentConfig, solver: str, budget: Budget,
                   results: list[TrialResult]) -> list[tuple]:
    rows = []
    for trial, r in enumerate(results):
        rows.append(("benchmark", cfg.scenario, solver, str(budget), trial,
                     ":".join(str(s) for s in trial_seed(cfg.seed, trial)),
                     float(r.discounted_return), r.steps, r.outcome, float(r.cost_per_step),
                     ";".join(str(n) for n in r.episodes)))
    return rows


def run_benchmark(cfg: ExperimentConfig) -> tuple[str, Summary, list[TrialResult]]:
    """Run ``cfg.trials`` trials; returns the CSV text, the return summary and the raw results."""
    results = run_trials(cfg)
    text = _csv_text(BENCH_HEADER, benchmark_rows(cfg, cfg.solver, cfg.budget, results))
    _write(text, cfg.out)
    _write_timing(cfg.out, [(cfg.solver, str(cfg.budget), i, r.seconds_per_step, r.seconds)
                            for i, r in enumerate(results)])
    summary = summarize(r.discounted_return for r in results)
    lo, hi = summary.ci
    log.info("%s on %s: mean return %.4g, 95%% CI [%.4g, %.4g] over %d trials",
             cfg.solver, cfg.scenario, summary.mean, lo, hi, summary.n)
    return text, summary, results


def run_budget_sweep(cfg: ExperimentConfig) -> tuple[str, list[tuple]]:
    """One aggregate row per (solver, budget) pair."""
    if not cfg.budgets:
        raise ConfigError("a budget sweep needs a non-empty budget list")
    solvers = cfg.solvers or [cfg.solver]
    rows, timing = [], []
    for solver in solvers:
        for budget in cfg.budgets:
            results = run_trials(cfg, solver, budget)
            s = summarize(r.discounted_return for r in results)
            lo, hi = s.ci
            rows.append((cfg.scenario, solver, str(budget), s.n, s.mean, s.std_error, lo, hi))
            timing += [(solver, str(budget), i, r.seconds_per_step, r.seconds)
                       for i, r in enumerate(results)]
    text = _csv_text(SWEEP_HEADER, rows)
    _write(text, cfg.out)
    _write_timing(cfg.out, timing)
    return text, rows


# --- variance study -------------------------------------------------------


def policy_episode(model: PomdpModel, root: HistoryNode, belief: ParticleBelief, level: int,
                   first_action: int, rng: np.random.Generator, max_depth: int) -> Episode:
    """Episode on ``level`` that takes ``first_action`` and then acts greedily on the
    frozen tree, ending with a heuristic tail once it leaves the visited part."""
    transition = model.transition
    is_terminal = model.is_terminal
    step_reward = _reward_fn(model)
    obs_key = _key_fn(model)
    d = model.noise_dim
    s = belief.sample(rng)
    e = Episode(level=level)
    e.states.append(s)
    h = root
    a = first_action
    stop = "terminal"
    while True:
        if is_terminal(s):
            break
        if len(e.actions) >= max_depth:
            stop = "horizon"
            break
        if a is None:
            if h is None or not any(h.action_visits[0]):
                stop = "empty"
                break
            a = best_action(h)
        psi = rng.random(d).tolist()
        s2, o = transition(level, s, a, psi)
        e.rewards.append(step_reward(s, a, s2))
        e.actions.append(a)
        e.observations.append(o)
        e.psis.append(psi)
        e.nodes.append(h)
        e.states.append(s2)
        if h is not None:
            h = h.children.get((a, o if obs_key is None else obs_key(o)))
        s = s2
        a = None
    e.stop = stop
    e.terminal = is_terminal(s)
    if not e.terminal and stop == "empty":
        e.tail = model.heuristic(s)
    return e


def _replay(model: PomdpModel, fine: Episode, level: int) -> Episode:
    # the frozen tree is never extended: give the replay a throwaway root
    scratch = HistoryNode(model.n_actions, 1)
    return replay_episode(model, scratch, fine, level)


def _variance(values: list[float]) -> float:
    return statistics.variance(values) if len(values) > 1 else math.nan


def measure_variances(model: PomdpModel, root: HistoryNode, belief: ParticleBelief,
                      samples: int, rng: np.random.Generator,
                      max_depth: int | None = None) -> tuple[list[float], list[float]]:
    """``(V[Q_l] for l in 0..L, V[Q_l - Q_{l-1}] for l in 1..L)`` at the frozen tree."""
    max_depth = max_depth or model.max_steps
    a = best_action(root)
    g = model.discount
    var_q, var_diff = [], []
    for l in range(model.n_levels):
        q = [policy_episode(model, root, belief, l, a, rng, max_depth).values(g)[0]
             for _ in range(samples)]
        var_q.append(_variance(q))
    for l in range(1, model.n_levels):
        diffs = []
        for _ in range(samples):
            fine = policy_episode(model, root, belief, l, a, rng, max_depth)
            coarse = _replay(model, fine, l - 1)
            diffs.append(fine.values(g)[0] - coarse.values(g)[0])
        var_diff.append(_variance(diffs))
    return var_q, var_diff


@dataclass
class VarianceStep:
    run: int
    step: int
    var_q: list
    var_diff: list


def run_variance_study(cfg: ExperimentConfig) -> tuple[str, list[VarianceStep]]:
    """Plan ``runs`` closed-loop MLPP trials and measure level variances after every step."""
    model = cfg.model()
    if model.max_level < 1:
        raise ConfigError("a variance study needs a model with at least two levels")
    if cfg.samples < 2:
        log.warning("variance needs at least 2 samples; rows will have missing values")
    opts = cfg.options()
    steps: list[VarianceStep] = []
    for run in range(cfg.runs):
        seed = trial_seed(cfg.seed, run)
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(5)[4])
        planner = make_planner(model, cfg.solver, cfg.budget, opts)

        def hook(t, root, belief, a, run=run):
            vq, vd = measure_variances(model, root, belief, cfg.samples, rng,
                                       planner.max_depth)
            steps.append(VarianceStep(run, t, vq, vd))

        if cfg.max_steps is not None:
            model_run = _capped(model, cfg.max_steps)
        else:
            model_run = model
        run_trial(model_run, planner, seed, on_step=hook)
    rows = []
    for st in steps:
        for l, v in enumerate(st.var_q):
            rows.append((cfg.scenario, st.run, st.step, l, "var_q", v, cfg.samples))
        for l, v in enumerate(st.var_diff, start=1):
            rows.append((cfg.scenario, st.run, st.step, l, "var_diff", v, cfg.samples))
    for l in range(model.n_levels):
        rows.append((cfg.scenario, "mean", "mean", l, "var_q",
                     _nanmean(st.var_q[l] for st in steps), cfg.samples))
    for l in range(1, model.n_levels):
        rows.append((cfg.scenario, "mean", "mean", l, "var_diff",
                     _nanmean(st.var_diff[l - 1] for st in steps), cfg.samples))
    text = _csv_text(VARIANCE_HEADER, rows)
    _write(text, cfg.out)
    return text, steps


def _nanmean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


class _capped:
    """View of a model whose closed-loop horizon is cut to ``max_steps``."""

    def __init__(self, model: PomdpModel, max_steps: int):
        self._model = model
        self.max_steps = min(max_steps, model.max_steps)

    def __getattr__(self, name):
        return getattr(self._model, name)


def run_experiment(cfg: ExperimentConfig) -> str:
    if cfg.study == "benchmark":
        return run_benchmark(cfg)[0]
    if cfg.study == "variance":
        return run_variance_study(cfg)[0]
    return run_budget_sweep(cfg)[0]
