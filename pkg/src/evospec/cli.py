"""Command-line entry point: ``evospec <subcommand> [--config FILE | --preset NAME] ...``."""
from __future__ import annotations

import argparse
import sys

from .harness import (ConfigError, PRESETS, ScenarioError, export, load_config, preset,
                      run_scenario)

SUBCOMMANDS = {
    "ess": "ess",
    "evolve": "evolutionary",
    "learn": "learning",
    "rl": "rl",
    "ode": "ode",
    "optimum": "optimum",
    "compare": "compare",
}

_HELP = {
    "ess": "equal-payoff equilibrium and per-channel payoffs",
    "evolve": "agent-based evolutionary mechanism (complete information)",
    "learn": "distributed learning mechanism (incomplete information)",
    "rl": "softmax reinforcement-learning baseline",
    "ode": "integrate the mean dynamics from a random or given start",
    "optimum": "centralized throughput optimum",
    "compare": "equilibrium vs RL vs optimum over a grid of user counts",
}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evospec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="JSON scenario file")
        src.add_argument("--preset", choices=sorted(PRESETS), default="paper-5ch",
                         help="built-in scenario (default: paper-5ch)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the scenario)")
        p.add_argument("--replications", type=_positive, help="number of replications")
        p.add_argument("--out", help="output file (default: standard output)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    mechanism = SUBCOMMANDS[args.command]
    try:
        scenario = load_config(args.config) if args.config else preset(args.preset)
        # the subcommand decides what runs; the file supplies network and parameters
        if scenario.mechanism != mechanism:
            scenario.mechanism = mechanism
            scenario.params = {}
        if args.seed is not None:
            scenario.seed = args.seed
        if args.replications is not None:
            scenario.replications = args.replications
        result = run_scenario(scenario)
        text = export(result, args.format, args.out)
    except ConfigError as exc:
        print(f"evospec: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"evospec: {exc}", file=sys.stderr)
        return 1
    if args.out is None:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader closed early (e.g. piped into head); not an error
            sys.stderr.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
