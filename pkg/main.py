"""
main.py – Occupancy Flow Kit command-line entry-point.
"""

from __future__ import annotations

import argparse
import importlib
import logging
import sys
from typing import List, Optional

import config
from occflow.errors import OccFlowError
from occflow.scene import PRESETS


# ═══════════════════════════════════════════════════════════════
# LOGGING
# ═══════════════════════════════════════════════════════════════

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL, logging.INFO),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
log = logging.getLogger("occflow")


# ═══════════════════════════════════════════════════════════════
# PARSER + SUBCOMMANDS
# ═══════════════════════════════════════════════════════════════

COMMANDS = [
    "commands.gen",
    "commands.train",
    "commands.eval",
    "commands.predict",
    "commands.render",
    "commands.gradcheck",
    "commands.selftest",
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occflow", description=config.BANNER)
    parser.add_argument("--config", help="JSON file overriding fields of the selected scale")
    parser.add_argument("--seed",   type=int, default=config.DEFAULT_SEED)
    parser.add_argument("--out",    default=config.DEFAULT_OUT, help="output directory")
    parser.add_argument("--scale",  choices=sorted(PRESETS), default=config.DEFAULT_SCALE)
    parser.add_argument("--version", action="version", version=config.BANNER)
    subparsers = parser.add_subparsers(dest="command", metavar="command")

    for name in COMMANDS:
        try:
            importlib.import_module(name).setup(subparsers)
            log.debug(f"✓ Loaded {name}")
        except Exception as exc:
            log.error(f"✗ Failed to load {name}: {exc}", exc_info=True)

    return parser


# ═══════════════════════════════════════════════════════════════
# RUN
# ═══════════════════════════════════════════════════════════════

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args   = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    if args.seed < 0:
        log.error("✗ --seed must be a non-negative integer")
        return 1

    try:
        return int(args.func(args) or 0)
    except OccFlowError as exc:
        log.error(f"✗ {exc}")
        return exc.exit_code
    except KeyboardInterrupt:
        log.info("Stopped by keyboard interrupt.")
        return 130
    except Exception as exc:
        log.error(f"✗ Unhandled error: {exc}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
