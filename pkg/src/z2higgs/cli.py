"""Command line entry point: ``z2higgs <kind> [--config FILE] [key=value ...]``."""

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex
from .cluster import BudgetExceeded as ClusterBudget
from .cluster import DomainError
from .exact import BudgetExceeded, DenominatorZero
from .free import Divergent
from .montecarlo import ConfigError


def build_parser():
    ap = argparse.ArgumentParser(prog="z2higgs", description="Z2 lattice Higgs model experiments")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in ex.KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", type=Path, help="key=value config file")
        sp.add_argument("--out", type=Path, help="output path prefix (stdout if omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, help="worker processes")
        sp.add_argument("overrides", nargs="*", metavar="key=value")
    return ap


def _fail(code, exc):
    json.dump({"error": type(exc).__name__, "message": str(exc), "exit": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return ex.EXIT_CONFIG if e.code else 0
    try:
        text = args.config.read_text() if args.config else ""
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.threads is not None:
            overrides.append(f"threads={args.threads}")
        cfg = ex.parse_config(text, overrides, kind=args.kind)
    except (ConfigError, OSError) as exc:
        return _fail(ex.EXIT_CONFIG, exc)
    try:
        res = ex.run(cfg, threads=cfg.threads)
        if args.out:
            main_path, meta = ex.emit_report(res, cfg, args.out)
            print(main_path)
        else:
            sys.stdout.write(res.text())
    except ConfigError as exc:
        return _fail(ex.EXIT_CONFIG, exc)
    except (BudgetExceeded, ClusterBudget, DomainError, Divergent, DenominatorZero, ValueError) as exc:
        return _fail(ex.EXIT_DOMAIN, exc)
    return ex.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
