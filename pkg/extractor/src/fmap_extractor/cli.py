"""Command-line front end: fmap-extract --frames DIR --out DIR ..."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractorConfig, extract_dir
from .vit import VARIANTS


def _resize(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmap-extract",
        description="Export dense ViT attention-key features as FMAP files.",
    )
    parser.add_argument("--frames", required=True, help="directory of input images")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--patch", type=int, choices=(8, 16), default=8)
    parser.add_argument("--resize", type=_resize, default=(224, 224), metavar="HxW")
    parser.add_argument("--variant", choices=sorted(VARIANTS), default="vit_small")
    parser.add_argument("--weights", help="local checkpoint path")
    parser.add_argument(
        "--init",
        choices=("pretrained", "random"),
        default="pretrained",
        help="'random' builds a seeded untrained backbone (dry runs, tests)",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExtractorConfig(
        variant=args.variant,
        patch_size=args.patch,
        resize=args.resize,
        device=args.device,
        weights=args.weights,
        init=args.init,
        seed=args.seed,
    )
    try:
        manifest = extract_dir(args.frames, args.out, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest['frames'])} FMAP files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
