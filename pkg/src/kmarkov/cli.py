"""Command-line entry point: ``kmarkov <subcommand> [--config PATH] [flags]``.

Exit codes: 0 success, 1 invalid config, 2 runtime abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run, validate

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# flag -> config field; every field can be set without a config file
_FLAGS = {
    "seed": int, "out": str, "trials": int, "threads": int, "N": int,
    "realizations": int, "theta": float, "layers": int, "max_steps": int,
    "window": int, "dt_max": int, "dx_max": int, "source": str,
}


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmarkov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("validate",):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        if name == "validate":
            p.add_argument("--experiment", choices=EXPERIMENTS)
        for flag, typ in _FLAGS.items():
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ)
        p.add_argument("--sizes", type=_int_list, help="comma-separated ring sizes")
        p.add_argument("--rule", action="append", type=json.loads,
                       help='inline rule JSON, e.g. \'{"k": 1, "table": [0.05, 0.95]}\'')
        p.add_argument("--k", type=int)
        p.add_argument("--table", type=_float_list, help="comma-separated probabilities")
        p.add_argument("--f-a", dest="f_a", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--baseline", type=json.loads, help="inline baseline rule JSON")
        p.add_argument("--mode", choices=["double", "single_a_even", "single_a_odd"])
        p.add_argument("--swap-letter", choices=["A", "B"])
        p.add_argument("--run-to-end", action="store_true", default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> dict:
    doc: dict = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    if args.command != "validate":
        doc["experiment"] = args.command
    elif args.experiment:
        doc["experiment"] = args.experiment
    for flag in _FLAGS:
        value = getattr(args, flag)
        if value is not None:
            doc[flag] = value
    if args.sizes:
        doc["sizes"] = args.sizes
    rules = list(args.rule or [])
    if args.table is not None or args.k is not None:
        rules.append({"k": args.k, "table": args.table})
    if args.f_a is not None:
        rules.append({"f_A": args.f_a, "lambda": args.lam or 0.0})
    if rules:
        doc["rules"] = rules
        doc.pop("rule", None)
    if args.baseline is not None:
        doc["baseline"] = args.baseline
    if args.mode or args.swap_letter:
        spec = dict(doc.get("letter_spec", {}))
        if args.mode:
            spec["mode"] = args.mode
        if args.swap_letter:
            spec["swap_letter"] = args.swap_letter
        doc["letter_spec"] = spec
    if args.run_to_end:
        doc["run_to_end"] = True
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = config_from_args(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        findings = validate(doc)
        for f in findings:
            print(f)
        if not findings:
            print("config OK")
        return EXIT_CONFIG if any(f.severity == "error" for f in findings) else EXIT_OK

    try:
        manifest = run(ExperimentConfig.from_dict(doc))
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any module abort maps to exit 2
        print(f"error: {args.command} aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(manifest.outputs)} files + manifest to {doc.get('out', 'out')}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
