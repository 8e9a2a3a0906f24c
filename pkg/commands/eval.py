"""
commands/eval.py  –  `eval`: score a checkpoint and write the metrics report.
"""

from __future__ import annotations

import argparse
import logging

from commands import add_dataset_args, dataset_from_args, out_dir, resolve_config
from occflow.errors import ContractError
from occflow.trainer import evaluate, evaluate_oracle

log = logging.getLogger("occflow.cli.eval")


def run(args: argparse.Namespace) -> int:
    cfg     = resolve_config(args)
    dataset = dataset_from_args(args, cfg)
    if args.oracle:
        report = evaluate_oracle(dataset)
    elif args.checkpoint:
        report = evaluate(args.checkpoint, dataset, cfg)
    else:
        raise ContractError("eval needs --checkpoint or --oracle")
    report.write(str(out_dir(args, "report.json")))
    print(report.to_json())
    return 0


def setup(subparsers) -> None:
    p = subparsers.add_parser("eval", help="evaluate a checkpoint")
    add_dataset_args(p)
    p.add_argument("--checkpoint", help="weights file written by train")
    p.add_argument("--oracle", action="store_true", help="score ground truth as the prediction")
    p.set_defaults(func=run)
