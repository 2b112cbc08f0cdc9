"""Command-line front end: run a scenario config, list or describe bundled ones.

Exit codes: 0 all declared checks passed, 1 at least one check failed,
2 config validation error (names the offending key), 3 runtime numerical
error (names the failing module or check).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import BohmlabError, ScenarioValidationError
from .scenarios import bundled_names, load_bundled, load_config, run_scenario


def _default_out() -> Path:
    return Path(os.environ.get("BOHMLAB_OUT", "bohmlab-out"))


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ScenarioValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unreadable file, bad JSON
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_scenario(
            config,
            out_root=args.out or _default_out(),
            threads=args.threads,
            seed_override=args.seed,
        )
    except ScenarioValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BohmlabError as exc:
        print(f"numerical error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3

    print(f"scenario: {result.name} (pipeline: {config['pipeline']})")
    for check in result.checks:
        mark = "PASS" if check.passed else "FAIL"
        print(f"  [{mark}] {check.name:32s} {check.detail}")
    print(f"report: {result.out_dir / 'report.json'}")
    return 0 if result.all_passed else 1


def _cmd_list(args) -> int:
    for name in bundled_names():
        cfg = load_bundled(name)
        desc = cfg.get("description", "")
        print(f"{name:28s} {desc}")
    return 0


def _cmd_describe(args) -> int:
    try:
        cfg = load_bundled(args.scenario)
    except ScenarioValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(f"name:        {cfg['name']}")
    print(f"pipeline:    {cfg['pipeline']}")
    if "description" in cfg:
        print(f"description: {cfg['description']}")
    if "reference" in cfg:
        print(f"reference:   {cfg['reference']}")
    if "seed" in cfg:
        print(f"seed:        {cfg['seed']}")
    if "grid" in cfg:
        g = cfg["grid"]
        print(f"grid:        {g['points']} points on {g['extents']} ({g.get('boundary', 'periodic')})")
    if "state" in cfg:
        print(f"state:       {cfg['state']['family']} {cfg['state'].get('params', {})}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bohmlab",
        description="Scenario-driven pilot-wave simulation runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario config (path or bundled name)")
    p_run.add_argument("config")
    p_run.add_argument("--out", type=Path, default=None, help="output root (default $BOHMLAB_OUT or ./bohmlab-out)")
    p_run.add_argument("--threads", type=int, default=1, help="worker cap; never affects results")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list", help="list bundled scenarios")
    p_list.set_defaults(func=_cmd_list)

    p_desc = sub.add_parser("describe", help="show one bundled scenario")
    p_desc.add_argument("scenario")
    p_desc.set_defaults(func=_cmd_describe)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
