#!/usr/bin/env python3
"""Build the bundled test images and the 256x256 calibration corpus.

Test images (held out of the corpus), central 256x256 crops of 512x512 originals:
  data/lena256.pgm    'lena' from the scipy 0.16.1 source tarball
  data/camera256.pgm  skimage 'camera'
  data/ascent256.pgm  'ascent' from the same scipy tarball

Corpus (data/corpus/*.pgm): seeded 256x256 crops, at full and half
resolution, of the natural photographs bundled with scikit-image and
scikit-learn plus scipy's 'face'.

Usage: python scripts/make_data.py [--scipy-sdist PATH] [--out data]
"""

import argparse
import bz2
import io
import pickle
import tarfile
import urllib.request
from pathlib import Path

import numpy as np
import skimage
import sklearn.datasets
from skimage import io as skio
from skimage.color import rgb2gray

from svrdenoise.imagio import Image, save_image

SCIPY_SDIST_URL = ("https://pypi.org/packages/7b/e1/"
                   "ecc1820874c396a094e6df30d4d3aa8119d4987c5ff0b9caec73db362849/"
                   "scipy-0.16.1.tar.gz")

SKIMAGE_SOURCES = ["astronaut.png", "brick.png", "chelsea.png", "coffee.png", "coins.png",
                   "grass.png", "gravel.png", "moon.png", "motorcycle_left.png", "rocket.jpg"]
SKLEARN_SOURCES = ["china.jpg", "flower.jpg"]
CROPS_PER_SOURCE = 10
SIZE = 256


def half(a):
    h, w = (a.shape[0] // 2) * 2, (a.shape[1] // 2) * 2
    a = a[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def center(a):
    h, w = a.shape
    r, c = (h - SIZE) // 2, (w - SIZE) // 2
    return a[r:r + SIZE, c:c + SIZE]


def gray(a):
    a = np.asarray(a)
    if a.ndim == 3:
        return rgb2gray(a[..., :3]) * 255.0
    return a.astype(np.float64)


def scipy_misc_arrays(sdist):
    out = {}
    with tarfile.open(sdist) as tf:
        for name in ("lena", "ascent", "face"):
            raw = tf.extractfile(f"scipy-0.16.1/scipy/misc/{name}.dat").read()
            if name == "face":
                arr = np.frombuffer(bz2.decompress(raw), dtype=np.uint8).reshape(768, 1024, 3)
            else:
                arr = np.asarray(pickle.load(io.BytesIO(raw), encoding="latin1"))
            out[name] = arr
    return out


def crops(a, n, rng):
    """n seeded crops, alternating between full and half resolution when possible."""
    levels = [a]
    if min(half(a).shape) >= SIZE:
        levels.append(half(a))
    out = []
    for k in range(n):
        src = levels[k % len(levels)]
        h, w = src.shape
        if h < SIZE or w < SIZE:
            raise ValueError("source smaller than crop size")
        r = int(rng.integers(0, h - SIZE + 1))
        c = int(rng.integers(0, w - SIZE + 1))
        out.append(src[r:r + SIZE, c:c + SIZE])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scipy-sdist", type=Path, default=None)
    ap.add_argument("--out", type=Path, default=Path("data"))
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args(argv)

    sdist = args.scipy_sdist
    if sdist is None:
        sdist = Path("/tmp/scipy-0.16.1.tar.gz")
        if not sdist.exists():
            urllib.request.urlretrieve(SCIPY_SDIST_URL, sdist)
    misc = scipy_misc_arrays(sdist)

    out = args.out
    (out / "corpus").mkdir(parents=True, exist_ok=True)
    skdir = Path(skimage.__file__).parent / "data"
    save_image(Image(center(misc["lena"].astype(float))), out / "lena256.pgm")
    save_image(Image(center(gray(skio.imread(skdir / "camera.png")))), out / "camera256.pgm")
    save_image(Image(center(misc["ascent"].astype(float))), out / "ascent256.pgm")

    sources = [(n.split(".")[0], gray(skio.imread(skdir / n))) for n in SKIMAGE_SOURCES]
    sldir = Path(sklearn.datasets.__file__).parent / "images"
    sources += [(n.split(".")[0], gray(skio.imread(sldir / n))) for n in SKLEARN_SOURCES]
    sources.append(("face", gray(misc["face"])))

    rng = np.random.default_rng(args.seed)
    count = 0
    for name, arr in sources:
        for k, crop in enumerate(crops(arr, CROPS_PER_SOURCE, rng)):
            save_image(Image(crop), out / "corpus" / f"{k:02d}_{name}.pgm")
            count += 1
    print(f"wrote 3 test images and {count} corpus images under {out}")


if __name__ == "__main__":
    main()
