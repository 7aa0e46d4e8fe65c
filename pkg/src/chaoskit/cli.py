"""Command-line entry point: ``chaoskit list | scenario <name> | run <config.json>``."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import SCENARIOS, ConfigError, ExperimentConfig, list_scenarios, run

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = "chaoskit-report"

# scenario flags, mapped onto scenario params
_PARAM_FLAGS = {
    "lambda": float,
    "q": int,
    "cells": int,
    "nu": float,
    "mu": float,
    "grid": int,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser, with_defaults: bool):
    d = (lambda v: v) if with_defaults else (lambda v: None)
    p.add_argument("--seed", type=int, default=d(0), help="master seed")
    p.add_argument("--n", type=int, default=None, help="sample size")
    p.add_argument("--replicates", type=int, default=d(8), help="number of independent seed blocks")
    p.add_argument("--out", default=d(DEFAULT_OUT), help="output directory for report.json and report.csv")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads")
    p.add_argument("--quiet", action="store_true", help="suppress the per-check listing")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chaoskit", description="Poisson-space chaos and fourth-moment bound experiments")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("list", help="list built-in scenarios")

    sc = sub.add_parser("scenario", help="run a built-in scenario")
    sc.add_argument("name", help="scenario name (see `chaoskit list`)")
    _common(sc, True)
    for flag, typ in _PARAM_FLAGS.items():
        sc.add_argument(f"--{flag}", dest=f"p_{flag}", type=typ, default=None)

    rn = sub.add_parser("run", help="run an experiment config file")
    rn.add_argument("config", help="path to a JSON config")
    _common(rn, False)
    return parser


def _print_report(report, quiet: bool):
    if not quiet:
        for r in report.records:
            bits = [f"{r.verdict:<12}", f"{r.scenario}/{r.check}", f"est={r.estimate:.6g}"]
            if r.se:
                bits.append(f"se={r.se:.3g}")
            if r.reference is not None:
                bits.append(f"ref={r.reference:.6g}")
            if r.rhs is not None:
                bits.append(f"rhs={r.rhs:.6g}")
            print("  ".join(bits))
    c = report.counts()
    print(f"{c['pass']} pass, {c['fail']} fail, {c['inconclusive']} inconclusive")
    for note in report.meta.get("notes", []):
        print(f"note: {note}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.command == "list":
        for s in list_scenarios():
            print(f"{s['name']:<18} {s['description']}  defaults={json.dumps(s['defaults'])}")
        return EXIT_OK

    try:
        if args.command == "scenario":
            if args.name not in SCENARIOS:
                raise ConfigError(f"unknown scenario {args.name!r}; choose from {sorted(SCENARIOS)}")
            params = {k: getattr(args, f"p_{k}") for k in _PARAM_FLAGS if getattr(args, f"p_{k}") is not None}
            cfg = ExperimentConfig(
                scenario=args.name, params=params, n=args.n, replicates=args.replicates,
                seed=args.seed, out=args.out, threads=args.threads,
            )
        else:
            try:
                cfg = ExperimentConfig.from_json(args.config)
            except OSError as e:
                raise ConfigError(str(e)) from e
            for key in ("seed", "n", "replicates", "out", "threads"):
                val = getattr(args, key)
                if val is not None:
                    setattr(cfg, key, val)
            if cfg.out is None:
                cfg.out = DEFAULT_OUT
            cfg.__post_init__()
        report = run(cfg)
    except ConfigError as e:
        print(f"chaoskit: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    _print_report(report, args.quiet)
    print(f"wrote {cfg.out}/report.json and {cfg.out}/report.csv")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
