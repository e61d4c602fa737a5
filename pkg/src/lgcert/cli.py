"""Command line entry point.

Exit codes: 0 success, 1 a certification check (or the exponent
experiment) failed, 2 invalid configuration, 3 solver, certifier or I/O
error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import ConfigInvalid, RunConfig
from .pipeline import PipelineError, run
from .reporting import IOFailure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lgcert", description="Least gradient solver and regularity certifier.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "compute a solution and export it"),
                        ("certify", "solve and run every applicable check"),
                        ("sweep", "tabulate level-set quantities of a solution")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="path to a JSON run config")
    p = sub.add_parser("example-optimal", help="run the optimal-exponent experiment")
    p.add_argument("--n", type=int, required=True, help="profile index n >= 2")
    p.add_argument("--config", help="optional JSON run config")
    return parser


def load_config(args) -> RunConfig:
    if args.command == "example-optimal":
        base = RunConfig.load(args.config).to_dict() if args.config else {}
        base["command"] = "example-optimal"
        base.setdefault("certifier", {})["n"] = args.n
        return RunConfig.from_dict(base)
    cfg = RunConfig.load(args.config)
    return cfg.with_updates(command=args.command)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigInvalid as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        arts = run(cfg)
    except ConfigInvalid as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, IOFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for path in arts.paths:
        print(path)
    return arts.exit_code


if __name__ == "__main__":
    sys.exit(main())
