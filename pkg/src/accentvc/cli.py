"""Command-line surface: one tool, one subcommand per pipeline stage.

Every subcommand shares the same flag vocabulary (--config, --seed,
--system, --out, --force); the output root falls back to the ACCENTVC_OUT
environment variable and then to ./runs.
"""

from __future__ import annotations

import argparse
import sys

from . import runner
from .config import RunConfig, load_config
from .errors import AccentVCError
from .training import SYSTEMS


def _add_common(p: argparse.ArgumentParser, system: bool = False,
                seed: bool = True) -> None:
    p.add_argument("--config", metavar="PATH",
                   help="YAML run configuration (defaults used if omitted)")
    p.add_argument("--out", metavar="DIR",
                   help=f"output root (default: ${runner.OUT_ENV} or ./runs)")
    p.add_argument("--force", action="store_true",
                   help="replace existing outputs instead of refusing")
    if seed:
        p.add_argument("--seed", type=int, metavar="N",
                       help="run seed (default: train.seed from the config)")
    if system:
        p.add_argument("--system", choices=SYSTEMS, required=True,
                       help="which ablation system to operate on")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accentvc",
        description="Voice-and-accent conversion experiments on a synthetic "
                    "factor-controlled corpus.")
    sub = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("gen-corpus", "sample the world and write the training corpus",
         dict()),
        ("train-recognizer", "train the speaker-independent recognizer",
         dict()),
        ("finetune-recognizer", "adapt the recognizer to the target accent",
         dict()),
        ("train-vc", "train one conversion system (resumable)",
         dict(system=True)),
        ("convert", "convert held-out source utterances to every target",
         dict(system=True)),
        ("eval", "probe-based evaluation of every trained system",
         dict()),
        ("ablation", "full pipeline for every system and seed in the config",
         dict(seed=False)),
        ("grad-check", "finite-difference check of every autodiff primitive",
         dict()),
        ("project", "2-D projection dump of encoder geometry",
         dict(system=True)),
    ]
    for name, help_text, kwargs in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p, **kwargs)
    return parser


def _dispatch(args: argparse.Namespace) -> None:
    cfg = load_config(args.config) if args.config else RunConfig()
    out = args.out or runner.default_out_root()
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = cfg.train.seed
    system = getattr(args, "system", None)
    force = args.force

    if args.command == "gen-corpus":
        path = runner.run_gen_corpus(cfg, out, seed, force)
    elif args.command == "train-recognizer":
        path = runner.run_train_recognizer(cfg, out, seed, force)
    elif args.command == "finetune-recognizer":
        path = runner.run_finetune_recognizer(cfg, out, seed, force)
    elif args.command == "train-vc":
        path = runner.run_train_vc(cfg, out, seed, system, force)
    elif args.command == "convert":
        path = runner.run_convert(cfg, out, seed, system, force)
    elif args.command == "eval":
        path = runner.run_eval(cfg, out, seed, force)
    elif args.command == "ablation":
        path = runner.run_ablation(cfg, out, force)
    elif args.command == "grad-check":
        path = runner.run_grad_check(cfg, out, seed, force)
    else:
        path = runner.run_project(cfg, out, seed, system, force)
    print(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except AccentVCError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
