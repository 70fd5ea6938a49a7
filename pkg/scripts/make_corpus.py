#!/usr/bin/env python3
"""Generate a synthetic image corpus as 8-bit PGM files.

The images (oriented gradients plus random steps, disks and Gaussian bumps,
overlaid with oriented sinusoidal textures) stand in for a natural-image
corpus so training and evaluation runs need no external downloads.
Deterministic per seed.
"""

import argparse
from pathlib import Path

from blockcs import datapipe
from blockcs.rng import Rng


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--count", type=int, default=50, help="number of images [50]")
    parser.add_argument("--size", type=int, default=256,
                        help="image side length in pixels [256]")
    parser.add_argument("--seed", type=int, default=0, help="generator seed [0]")
    parser.add_argument("--prefix", default="synth", help="file name prefix [synth]")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = datapipe.make_synthetic_corpus(args.count, args.size, Rng(args.seed),
                                             prefix=args.prefix)
    for rec in records:
        datapipe.save_image(rec.pixels, out / f"{rec.name}.pgm")
    print(f"wrote {len(records)} images of {args.size}x{args.size} to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
