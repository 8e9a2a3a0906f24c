"""
commands/gen.py  –  `gen`: write seeded synthetic scenarios to disk.
"""

from __future__ import annotations

import argparse
import logging

from commands import add_dataset_args, out_dir, resolve_config, spec_from_args
from occflow.errors import ValidationError
from occflow.scenario_gen import generate
from occflow.scenario_io import save_scenario
from occflow.scene import validate

log = logging.getLogger("occflow.cli.gen")


def run(args: argparse.Namespace) -> int:
    cfg  = resolve_config(args)
    spec = spec_from_args(args)
    root = out_dir(args, "scenarios")
    for seed in range(args.seed, args.seed + args.count):
        scenario = generate(seed, spec, cfg)
        problems = validate(scenario)
        if problems:
            raise ValidationError(problems)
        save_scenario(scenario, str(root / f"scenario_{seed:06d}.json"))
    log.info(f"✓ Wrote {args.count} scenario(s) to {root}")
    return 0


def setup(subparsers) -> None:
    p = subparsers.add_parser("gen", help="generate synthetic scenarios")
    add_dataset_args(p)
    p.set_defaults(func=run)
