"""Command-line entry point: ``mlpp {bench,variance,sweep,validate-config}``."""

from __future__ import annotations

import argparse
import logging
import sys

from mlpp.harness import ExperimentConfig, load_config, parse_budget, run_experiment
from mlpp.problems import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2

VERBS = {"bench": "benchmark", "variance": "variance", "sweep": "budget-sweep"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlpp", description="Multilevel POMDP planning experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in (*VERBS, "validate-config"):
        p = sub.add_parser(verb)
        p.add_argument("--config", help="TOML or JSON experiment config")
        if verb == "validate-config":
            continue
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="CSV output path (default: stdout)")
        p.add_argument("--trials", type=int, help="trials (runs for the variance verb)")
        p.add_argument("--budget", help='e.g. "1000", "cost:5000", "250ms"')
        p.add_argument("--scenario")
        p.add_argument("--solver", help="mlpp or baseline@<level>")
        p.add_argument("--workers", type=int)
        p.add_argument("--dump-tree", help="write the first root tree of trial 0 as JSON")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.verb == "validate-config":
        return cfg
    overrides = {
        "study": VERBS[args.verb],
        "seed": args.seed,
        "out": args.out,
        "trials": args.trials,
        "scenario": args.scenario,
        "solver": args.solver,
        "workers": args.workers,
        "dump_tree": args.dump_tree,
        "budget": parse_budget(args.budget) if args.budget else None,
    }
    if args.verb == "variance":
        # a variance study repeats closed-loop runs rather than trials
        overrides["runs"] = overrides.pop("trials")
    try:
        return cfg.replace(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if args.verb == "validate-config":
            cfg.model()
            print(f"ok: {cfg.study} on {cfg.scenario} with {cfg.solver}")
            return EXIT_OK
        text = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out is None:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
