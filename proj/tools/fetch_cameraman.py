#!/usr/bin/env python3
"""Materialize the 256x256 8-bit cameraman test image as a binary PGM.

The benchmark and acceptance runs expect data/cameraman.pgm. The image is
not shipped with this repository; this script derives the 256x256 variant
from scikit-image's bundled 512x512 original by 2x2 box averaging.
"""
import argparse
import sys


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("output", nargs="?", default="data/cameraman.pgm")
    args = ap.parse_args()

    try:
        import numpy as np
        from skimage import data
    except ImportError as e:
        print(f"error: {e}; install scikit-image or supply your own "
              f"256x256 cameraman PGM at {args.output}", file=sys.stderr)
        return 1

    img = data.camera().astype(np.float64)
    assert img.shape == (512, 512)
    small = img.reshape(256, 2, 256, 2).mean(axis=(1, 3))
    small = np.clip(np.rint(small), 0, 255).astype(np.uint8)

    with open(args.output, "wb") as f:
        f.write(b"P5\n256 256\n255\n")
        f.write(small.tobytes())
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
