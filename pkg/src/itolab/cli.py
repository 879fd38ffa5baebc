"""Command line entry point ``itolab``.

Exit status: 0 on success, 1 when an asserted verification check fails, 2 on
usage, configuration or input errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import experiments
from .exceptions import ChecksumError, ConfigError, ItoLabError

WORKERS_ENV = "ITOLAB_WORKERS"

log = logging.getLogger("itolab")


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="itolab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workers=False):
        sp.add_argument("--config", required=True, type=Path,
                        help="key=value config file or a run manifest (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="override the base seed")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        if workers:
            sp.add_argument("--workers", type=int, default=None,
                            help=f"worker processes (default ${WORKERS_ENV} or 1)")

    common(sub.add_parser("simulate", help="run the eps ladder of the SPDE solver"), workers=True)
    common(sub.add_parser("kinetic", help="compute kinetic references"))
    common(sub.add_parser("ou-sample", help="sample the limiting OU field"))
    v = sub.add_parser("verify", help="run the acceptance checks on stored outputs")
    common(v)
    v.add_argument("--inputs", type=Path, default=None, help="input directory (default --out)")
    r = sub.add_parser("report", help="write plot-data CSVs")
    common(r)
    r.add_argument("--inputs", type=Path, default=None, help="input directory (default --out)")
    return p


def run(args) -> int:
    cfg = config_mod.load(args.config)
    if args.seed is not None:
        cfg = config_mod.with_overrides(cfg, seed=args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        workers = args.workers if args.workers is not None else _default_workers()
        experiments.cmd_simulate(cfg, out, workers=workers)
    elif args.command == "kinetic":
        experiments.cmd_kinetic(cfg, out)
    elif args.command == "ou-sample":
        experiments.cmd_ou_sample(cfg, out)
    elif args.command == "verify":
        report, status = experiments.cmd_verify(cfg, args.inputs or out, out)
        for r in report["results"]:
            if r["asserted"]:
                mark = "PASS" if r["passed"] else "FAIL"
                print(f"[{mark}] criterion {r['criterion']:>2} {r['name']}: "
                      f"statistic={r['statistic']!r} threshold={r['threshold']!r}")
        return status
    elif args.command == "report":
        for f in experiments.cmd_report(cfg, args.inputs or out, out):
            print(out / f)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigError, ChecksumError) as exc:
        print(f"itolab: error: {exc}", file=sys.stderr)
        return 2
    except ItoLabError as exc:
        print(f"itolab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
