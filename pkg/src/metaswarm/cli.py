"""Command-line front end.

Five subcommands (train, evaluate, transfer, ablate, interpret), each taking
--config, --out and --seed.  Exit codes: 0 success, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NumericError
from .harness import cmd_ablate, cmd_evaluate, cmd_interpret, cmd_train, cmd_transfer

_COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "transfer": cmd_transfer,
    "ablate": cmd_ablate,
    "interpret": cmd_interpret,
}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be a u64, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metaswarm",
        description="trainable swarm meta-optimizer: training, evaluation and "
                    "interpretation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("train", "train a model and write checkpoint plus training log"),
            ("evaluate", "method comparison statistics on a function battery"),
            ("transfer", "evaluate ripple-weight-sweep checkpoints on the "
                         "canonical benchmark"),
            ("ablate", "run the architecture ablation ladder"),
            ("interpret", "export feature weights, trace share and sample paths")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="flat key = value file")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=_u64, default=0, help="base seed (u64)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args.config, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
