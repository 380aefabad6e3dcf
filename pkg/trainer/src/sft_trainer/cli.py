"""Command-line entry point: train an adapter, print the serving recipe."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import TrainConfig
from .serve import serve_hint
from .train import TINY_MODEL_NAME, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sft-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune adapters on an exported JSONL dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint directory")
    p.add_argument("--base-model", default=TINY_MODEL_NAME)
    p.add_argument("--model-kind", default="decoder-only",
                   choices=["decoder-only", "encoder-decoder"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-seq-len", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quantize", action="store_true", help="store base weights int8")
    p.add_argument("--device")

    p = sub.add_parser("serve-hint", help="print the serving recipe")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "serve-hint":
        print(serve_hint())
        return 0

    overrides = {
        "base_model": args.base_model,
        "model_kind": args.model_kind,
        "seed": args.seed,
        "quantize_base": args.quantize,
    }
    for field, name in (("epochs", "epochs"), ("batch_size", "batch_size"),
                        ("learning_rate", "learning_rate"), ("max_seq_len", "max_seq_len")):
        value = getattr(args, name)
        if value is not None:
            overrides[field] = value
    try:
        result = train(args.dataset, TrainConfig(**overrides), args.out, device=args.device)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"checkpoint: {result.checkpoint_dir}")
    print(f"loss: {result.initial_loss:.4f} -> {result.final_loss:.4f} "
          f"over {len(result.steps)} steps")
    return 0


if __name__ == "__main__":
    sys.exit(main())
