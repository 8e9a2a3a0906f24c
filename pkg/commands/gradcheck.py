"""
commands/gradcheck.py  –  `gradcheck`: finite-difference audit.
"""

from __future__ import annotations

import argparse

from occflow.errors import ValidationError
from occflow.gradcheck import run_gradient_suite


def run(args: argparse.Namespace) -> int:
    results = run_gradient_suite(seed=args.seed, include_model=not args.skip_model)
    failed  = [f"{r.name}: {r.error:.2e}" for r in results if not r.passed]
    if failed:
        raise ValidationError(failed)
    print(f"✓ {len(results)} gradient checks passed")
    return 0


def setup(subparsers) -> None:
    p = subparsers.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--skip-model", action="store_true", help="leave out the end-to-end model check")
    p.set_defaults(func=run)
