# cli/__main__.py
"""
Entry point: python -m cli <gen-synth|train|eval|ppr|infer> [options]

Exit status: 0 success, 1 internal error, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional, Sequence

import structlog
from pydantic import ValidationError

from cli.commands import (
    UsageError,
    cmd_eval,
    cmd_gen_synth,
    cmd_infer,
    cmd_ppr,
    cmd_train,
)
from config.loader import ConfigError, load_config
from diffcore.checkpoint import CheckpointFormatError
from kg.graph import CorpusValidationError
from kg.loader import CorpusLoadError
from utils.logging_setup import configure_logging

log = structlog.get_logger("cli")

USAGE_ERRORS = (
    UsageError,
    ConfigError,
    ValidationError,
    CorpusLoadError,
    CorpusValidationError,
    CheckpointFormatError,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dot-path override, e.g. train.lr=0.005 (repeatable)")
    p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING ...")


def _add_ablations(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-hos", action="store_true", help="cosine only, no higher-order similarity")
    p.add_argument("--no-csls", action="store_true", help="skip the CSLS hubness correction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m cli",
        description="Dangling-aware entity alignment: train, evaluate and inspect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a synthetic KG pair in the dataset layout")
    _add_common(p)
    p.add_argument("--out", help="target directory (default under output_dir)")

    p = sub.add_parser("train", help="train an encoder, one checkpoint per turn")
    _add_common(p)
    p.add_argument("--force", action="store_true", help="retrain even if a checkpoint exists")
    p.add_argument("--no-ot", action="store_true", help="train without the optimal transport loss")

    p = sub.add_parser("eval", help="relaxed and consolidated evaluation")
    _add_common(p)
    _add_ablations(p)
    p.add_argument("--checkpoint", help="checkpoint path (default: the run dir for this config)")
    p.add_argument("--split", choices=("valid", "test"), default="test")

    p = sub.add_parser("ppr", help="top-k personalized PageRank from one entity")
    _add_common(p)
    p.add_argument("source", help="entity URI")
    p.add_argument("--side", type=int, choices=(1, 2), default=1)
    p.add_argument("--top-k", type=int, default=10)

    p = sub.add_parser("infer", help="ranked candidates with dangling verdicts, plus embeddings")
    _add_common(p)
    _add_ablations(p)
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--out", help="output directory (default: <run>/infer)")
    return parser


def _overrides(args: argparse.Namespace) -> List[str]:
    out = list(args.overrides)
    if getattr(args, "no_hos", False):
        out.append("inference.use_hos=false")
    if getattr(args, "no_csls", False):
        out.append("inference.use_csls=false")
    if getattr(args, "no_ot", False):
        out.append("ot.enabled=false")
    return out


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args.config, _overrides(args))
    if args.command == "gen-synth":
        print(cmd_gen_synth(cfg, args.out))
    elif args.command == "train":
        paths = cmd_train(cfg, force=args.force)
        print(paths.checkpoint)
    elif args.command == "eval":
        payload = cmd_eval(cfg, args.checkpoint, args.split)
        print(payload["table"])
    elif args.command == "ppr":
        frame, total = cmd_ppr(cfg, args.source, args.side, args.top_k)
        print(frame.to_string(index=False, float_format=lambda v: f"{v:.6f}"))
        print(f"sum = {total:.10f}")
    elif args.command == "infer":
        print(cmd_infer(cfg, args.checkpoint, args.split, args.out))
    else:  # pragma: no cover - argparse rejects unknown commands
        raise UsageError(f"unknown command {args.command!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        run(args)
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("command failed", command=args.command)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
