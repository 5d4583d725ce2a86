"""Command line: train a checkpoint, serve it, export head sensitivities.

    plangen-service train --pairs train.jsonl --dev dev.jsonl \
        --out ckpt.pt [--mode planned|draft] [--lr 2e-5] [--batch-size 64]
    plangen-service serve --checkpoint ckpt.pt [--planned-checkpoint p.pt] \
        [--port 8080] [--beam 5]
    plangen-service export-sens --checkpoint ckpt.pt --pairs dev.jsonl \
        --out dumps/
"""

from __future__ import annotations

import argparse
import sys

from .data import load_pairs
from .model import Checkpoint
from .sensitivity import export_sensitivities
from .server import ServingConfig, serve
from .train import TrainConfig, TrainResult, finetune


def cmd_train(args) -> int:
    train_pairs = load_pairs(args.pairs, mode=args.mode, seed=args.seed)
    dev_pairs = load_pairs(args.dev, mode=args.mode, seed=args.seed + 1)
    config = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        mode=args.mode,
    )
    result: TrainResult = finetune(
        train_pairs, dev_pairs, config, log_path=args.log
    )
    result.checkpoint.save(args.out)
    print(
        f"saved {args.out} after {result.epochs_run} epochs "
        f"(best dev loss {result.best_dev_loss:.4f}, "
        f"early stop: {result.stopped_early})"
    )
    return 0


def cmd_serve(args) -> int:
    checkpoints = {"draft": args.checkpoint}
    checkpoints["planned"] = args.planned_checkpoint or args.checkpoint
    config = ServingConfig(
        checkpoints=checkpoints,
        beam_size=args.beam,
        max_len=args.max_len,
        model_tag=args.model_tag,
    )
    serve(config, host=args.host, port=args.port)
    return 0


def cmd_export_sens(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    pairs = load_pairs(args.pairs, mode="planned")
    dumps = export_sensitivities(checkpoint, pairs, args.out)
    print(f"wrote {len(dumps)} sensitivity dumps to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plangen-service", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fine-tune a checkpoint")
    p_train.add_argument("--pairs", required=True)
    p_train.add_argument("--dev", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--log", default=None)
    p_train.add_argument("--mode", choices=["planned", "draft"], default="planned")
    p_train.add_argument("--lr", type=float, default=2e-5)
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--max-epochs", type=int, default=30)
    p_train.add_argument("--patience", type=int, default=3)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(func=cmd_train)

    p_serve = sub.add_parser("serve", help="serve the wire protocol")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--planned-checkpoint", default=None,
                         help="separate checkpoint for planned mode")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--beam", type=int, default=5)
    p_serve.add_argument("--max-len", type=int, default=24)
    p_serve.add_argument("--model-tag", default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_sens = sub.add_parser("export-sens", help="write head-sensitivity dumps")
    p_sens.add_argument("--checkpoint", required=True)
    p_sens.add_argument("--pairs", required=True)
    p_sens.add_argument("--out", required=True)
    p_sens.set_defaults(func=cmd_export_sens)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
