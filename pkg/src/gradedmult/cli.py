"""Command-line entry point: ``gradedmult <subcommand> --config <path> [--out <dir>]``."""

from __future__ import annotations

import argparse
import sys

from .experiment import SUBCOMMANDS, ConfigError, load_config, run_experiment

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def build_parser():
    p = argparse.ArgumentParser(
        prog="gradedmult",
        description="Run multiplier experiments on graded groups from a JSON config.",
        epilog="Exit status: 0 if every assertion passes, 1 if any fails, 2 on config or runtime errors. "
               "Worker threads come from GRADEDMULT_WORKERS.",
    )
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", default=None, help="output directory (default: the config's 'output' field)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        status, path, rep = run_experiment(cfg, args.subcommand, args.out)
    except (ConfigError, ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_ERROR
    failed = [a["name"] for a in rep.assertions if not a["passed"]]
    print("%s: %d assertions, %d failed; report %s" % (args.subcommand, len(rep.assertions), len(failed), path))
    for name in failed:
        print("  FAILED %s" % name)
    return EXIT_OK if status == 0 else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
