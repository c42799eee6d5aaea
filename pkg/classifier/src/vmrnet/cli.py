"""Command line: train a checkpoint, predict scores for a video."""

from __future__ import annotations

import argparse
import sys

import torch

from .errors import VmrnetError
from .network import NetworkSpec, build_network
from .predict import segment_scores, video_decision, write_scores_csv
from .tensors import load_dir
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

EXIT_INPUT = 2


def _cmd_train(args) -> int:
    tensors = load_dir(args.tensors, require_labels=True)
    cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )
    torch.manual_seed(cfg.seed)
    model = build_network(NetworkSpec())
    history = train(model, tensors, cfg)
    save_checkpoint(model, cfg, history, args.out)
    print(
        f"trained {len(history['accuracy'])} epochs on {len(tensors)} tensors, "
        f"final accuracy {history['accuracy'][-1]:.3f} -> {args.out}"
    )
    return 0


def _cmd_predict(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    tensors = load_dir(args.tensors)
    scores = segment_scores(model, tensors)
    write_scores_csv(args.out, args.video_id, tensors, scores)
    decision = "genuine" if video_decision(scores) else "attack"
    print(f"scored {len(scores)} segments -> {args.out} (video: {decision})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmrnet",
        description="EfficientNet-with-GRU classifier over .vmr1 tensors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a checkpoint on labeled tensors")
    p_train.add_argument("--tensors", required=True, help=".vmr1 directory")
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--batch-size", type=int, default=8)
    p_train.add_argument("--lr", type=float, default=0.1)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(func=_cmd_train)

    p_predict = sub.add_parser("predict", help="score a video's tensors")
    p_predict.add_argument("--checkpoint", required=True)
    p_predict.add_argument("--tensors", required=True, help=".vmr1 directory")
    p_predict.add_argument("--video-id", required=True)
    p_predict.add_argument("--out", required=True, help="scores CSV path")
    p_predict.set_defaults(func=_cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VmrnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
