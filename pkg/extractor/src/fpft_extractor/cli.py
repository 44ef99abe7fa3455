"""Command line for batch feature extraction.

    fpft-extract --images data/pets --backbone resnet50 --out pets.fpft
"""

import argparse
import sys

from .extract import ExtractionJob, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpft-extract", description=__doc__)
    parser.add_argument("--images", required=True, help="folder with one subdirectory per class")
    parser.add_argument("--backbone", required=True,
                        choices=("resnet50", "vit_b16", "clip_vit_b32"))
    parser.add_argument("--out", required=True, help="output FPFT1 path")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--normalize", action="store_true",
                        help="L2-normalize every feature row")
    parser.add_argument("--untrained", action="store_true",
                        help="random weights; skips the weight download")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        image_dir=args.images,
        backbone=args.backbone,
        output_path=args.out,
        batch_size=args.batch_size,
        normalize=args.normalize,
        pretrained=not args.untrained,
    )
    try:
        out = extract(job)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
