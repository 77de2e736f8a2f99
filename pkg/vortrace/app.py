# -*- coding: utf-8 -*-
"""
vortrace command line: simulate | tracer | ensemble | corrector | coupling | diagnose | gui

Exit codes: 0 ok, 2 configuration, 3 blow-up (partial outputs written),
4 invariant failure, 5 snapshot format, 6 other numerical or argument
error (for example zero noise on the control modes), 7 file system error.
"""

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .errors import BlowUpError, ConfigError, InvariantError, SnapshotFormatError, VortraceError
from .harness import COMMANDS, load_config, run_command

logger = logging.getLogger("vortrace")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_INVARIANT = 4
EXIT_SNAPSHOT = 5
EXIT_ERROR = 6
EXIT_IO = 7

_DESCRIPTIONS = {
    "simulate": "one path; observables CSV plus initial/final snapshots",
    "tracer": "Eulerian field with a tracer and the Lagrangian round-trip check",
    "ensemble": "drift, asymptotic covariance and CLT diagnostics over many paths",
    "corrector": "Monte Carlo corrector at the initial field or given snapshots",
    "coupling": "derivative flow, controlled flow and Malliavin derivative in lockstep",
    "diagnose": "energy balance and moment monitors along one path",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vortrace", description="Stochastic 2D vorticity and passive tracer lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    common.add_argument("--resume", help="snapshot to continue from")
    common.add_argument("--progress", action="store_true", help="show progress bars")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=_DESCRIPTIONS[name])
    sub.add_parser("gui", help="desktop experiment runner and snapshot inspector")
    return parser


def _configure_logging(verbose: bool):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("vortrace")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gui":
        from .lab_gui import main as gui_main

        return gui_main()

    _configure_logging(args.verbose)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "output_dir": args.out, "threads": args.threads})
        result = run_command(args.command, cfg, args.out, args.resume, args.progress)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except BlowUpError as exc:
        logger.error("%s (partial outputs kept)", exc)
        return EXIT_BLOWUP
    except InvariantError as exc:
        logger.error("%s", exc)
        return EXIT_INVARIANT
    except SnapshotFormatError as exc:
        logger.error("snapshot: %s", exc)
        return EXIT_SNAPSHOT
    except VortraceError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO

    for path in result.files:
        logger.info("wrote %s", path)
    if result.summary:
        print(json.dumps(result.summary, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
