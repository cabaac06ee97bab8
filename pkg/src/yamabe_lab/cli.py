"""Command line entry point: ``yamabe-lab {verify,flow,bvp,sweep}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .experiments import ConfigError, Scenario, ScenarioConfig, default_config, run_scenario

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

SWEEP_KINDS = {
    "removability": Scenario.REMOVABILITY,
    "completeness": Scenario.COMPLETENESS,
    "dichotomy": Scenario.DICHOTOMY,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yamabe-lab", description="Radial Yamabe flow experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario config")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--workers", type=int, default=1, help="parallel sweep members")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="formula and oracle checks")
    sub.add_parser("flow", parents=[common], help="single flow run")
    sub.add_parser("bvp", parents=[common], help="elliptic side problems")
    sweep = sub.add_parser("sweep", parents=[common], help="parameter sweeps")
    sweep.add_argument("--kind", choices=sorted(SWEEP_KINDS), required=True)
    return parser


def _load(args) -> ScenarioConfig:
    scenario = SWEEP_KINDS[args.kind] if args.command == "sweep" else Scenario(args.command)
    if args.config:
        cfg = ScenarioConfig.from_json(args.config)
        if cfg.scenario is not scenario:
            raise ConfigError(f"config is for {cfg.scenario.value!r}, command asks for {scenario.value!r}")
    else:
        cfg = default_config(scenario)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = _load(args)
        report = run_scenario(cfg, args.out, workers=args.workers)
    except Exception as err:  # every failure to execute maps to exit code 2
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"[{status}] {c.criterion} {c.name}: measured {c.measured:.6g} (threshold {c.threshold:.6g})")
    print(f"{report.scenario.value}: {'all checks passed' if report.passed else 'some checks failed'} in {report.runtime:.1f}s")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
