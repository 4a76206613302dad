"""CLI: extract frozen-backbone features into an FVF1 file."""

from __future__ import annotations

import argparse
import sys

from .extract import extract_folder, extract_medmnist


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fvf-extract",
        description="Extract frozen-backbone image features into FVF1 files")
    p.add_argument("--backbone", required=True,
                   choices=["resnet50", "dinov2-base", "biomedclip"])
    p.add_argument("--input", required=True,
                   help="folder with one subdirectory per class, or "
                        "medmnist:<name>[:<split>]")
    p.add_argument("--out", required=True, help="output .fvf path")
    p.add_argument("--weights", default="pretrained",
                   help="'pretrained', 'random:<seed>', or a checkpoint path")
    p.add_argument("--batch-size", type=int, default=32)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.input.startswith("medmnist:"):
        parts = args.input.split(":")
        name = parts[1]
        split = parts[2] if len(parts) > 2 else "train"
        summary = extract_medmnist(name, args.backbone, args.out, split=split,
                                   weights=args.weights,
                                   batch_size=args.batch_size)
    else:
        summary = extract_folder(args.input, args.backbone, args.out,
                                 weights=args.weights,
                                 batch_size=args.batch_size)
    print(f"wrote {summary['out']}: N={summary['n']} d={summary['d']} "
          f"K={summary['k']} (skipped {summary['skipped']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
