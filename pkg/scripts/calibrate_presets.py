#!/usr/bin/env python3
"""Calibrate codec-noise presets so the noisy image hits a target SSIM.

Targets: jpeg strong 0.68, jpeg mild 0.78, j2k strong 0.54, j2k mild 0.68,
measured on data/lena256.pgm.  Prints the strengths to paste into
``svrdenoise.noisegen.PRESETS``.
"""

import argparse

from scipy.optimize import brentq

from svrdenoise.imagio import load_image
from svrdenoise.metrics import ssim
from svrdenoise.noisegen import j2k_like, jpeg_like

TARGETS = [("jpeg_strong", jpeg_like, 0.68), ("jpeg_mild", jpeg_like, 0.78),
           ("j2k_strong", j2k_like, 0.54), ("j2k_mild", j2k_like, 0.68)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--image", default="data/lena256.pgm")
    args = ap.parse_args(argv)
    x = load_image(args.image).data
    for name, fn, target in TARGETS:
        s = brentq(lambda q: ssim(x, fn(x, q)) - target, 0.5, 200.0, xtol=1e-3)
        print(f"{name}: strength {s:.3g} -> noisy SSIM {ssim(x, fn(x, round(s, 2))):.4f}")


if __name__ == "__main__":
    main()
