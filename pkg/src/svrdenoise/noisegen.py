"""Seeded degradation simulators and reference noise histograms.

Every simulator is a pure function of ``(image, spec)``; randomness comes
from ``numpy.random.default_rng`` (PCG64) seeded by ``spec.seed``.

Bookkeeping is exact: noisy images are rounded to a ``2**-20`` grid, so for
8-bit inputs ``noisy - residual == img`` holds bit for bit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.fft import dctn, idctn

from .imagio import Image, as_array
from .stats import NOISE_RANGE, PAIR_BINS, PAIR_SHIFT, Hist2D, merge_hists, pair_hist
from .xform import ortho_forward, ortho_inverse_array

_GRID = 2.0 ** 20

# ITU-T T.81 Annex K luminance quantization table
JPEG_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


class NoiseSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Gaussian:
    var: float = 400.0
    seed: int = 0
    kind: str = field(default="gaussian", init=False)

    def validate(self):
        if not self.var >= 0:
            raise NoiseSpecError("Gaussian variance must be >= 0")


@dataclass(frozen=True)
class VerticalStriping:
    col_frac: float = 0.04
    factor_range: Tuple[float, float] = (0.8, 1.0)
    group_len: Tuple[int, int] = (5, 10)
    seed: int = 0
    kind: str = field(default="striping", init=False)

    def validate(self):
        if not 0.0 <= self.col_frac <= 1.0:
            raise NoiseSpecError("col_frac must be in [0, 1]")
        lo, hi = self.factor_range
        if not 0.0 <= lo <= hi:
            raise NoiseSpecError("factor_range must satisfy 0 <= lo <= hi")
        gl, gh = self.group_len
        if not 1 <= gl <= gh:
            raise NoiseSpecError("group_len must satisfy 1 <= lo <= hi")


@dataclass(frozen=True)
class Iris:
    gauss_var: float = 50.0
    salt_pepper_frac: float = 0.0005
    n_patches: Tuple[int, int] = (2, 4)
    patch_size: Tuple[int, int] = (8, 16)
    interlace_gain: float = 0.9
    gaussian: bool = True
    salt_pepper: bool = True
    patches: bool = True
    interlace: bool = True
    seed: int = 0
    kind: str = field(default="iris", init=False)

    def validate(self):
        if not self.gauss_var >= 0:
            raise NoiseSpecError("gauss_var must be >= 0")
        if not 0.0 <= self.salt_pepper_frac <= 1.0:
            raise NoiseSpecError("salt_pepper_frac must be in [0, 1]")
        if not 0 <= self.n_patches[0] <= self.n_patches[1]:
            raise NoiseSpecError("n_patches must be an ascending nonnegative range")
        if not 1 <= self.patch_size[0] <= self.patch_size[1]:
            raise NoiseSpecError("patch_size must be an ascending positive range")
        if not self.interlace_gain >= 0:
            raise NoiseSpecError("interlace_gain must be >= 0")


@dataclass(frozen=True)
class JpegLike:
    coarseness: float = 1.0
    seed: int = 0
    kind: str = field(default="jpeg", init=False)

    def validate(self):
        if not self.coarseness >= 0:
            raise NoiseSpecError("coarseness must be >= 0")


@dataclass(frozen=True)
class J2kLike:
    delta: float = 10.0
    levels: int = 4
    seed: int = 0
    kind: str = field(default="j2k", init=False)

    def validate(self):
        if not self.delta >= 0:
            raise NoiseSpecError("delta must be >= 0")
        if self.levels < 1:
            raise NoiseSpecError("levels must be >= 1")


NoiseSpec = Union[Gaussian, VerticalStriping, Iris, JpegLike, J2kLike]
_KINDS = {cls.__dataclass_fields__["kind"].default: cls
          for cls in (Gaussian, VerticalStriping, Iris, JpegLike, J2kLike)}

# Presets calibrated on the bundled 256x256 Lena (see scripts/calibrate_presets.py):
# noisy SSIM targets 0.68 (jpeg strong), 0.78 (jpeg mild), 0.54 (j2k strong), 0.68 (j2k mild).
PRESETS = {
    "gaussian200": Gaussian(200.0),
    "gaussian400": Gaussian(400.0),
    "striping": VerticalStriping(),
    "iris": Iris(),
    "jpeg_strong": JpegLike(12.5),
    "jpeg_mild": JpegLike(6.52),
    "j2k_strong": J2kLike(56.9),
    "j2k_mild": J2kLike(29.7),
}


def spec_to_dict(spec: NoiseSpec) -> dict:
    d = asdict(spec)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def spec_from_dict(d: dict) -> NoiseSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise NoiseSpecError(f"unknown noise kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls = _KINDS[kind]
    names = {f.name for f in fields(cls) if f.init}
    unknown = set(d) - names
    if unknown:
        raise NoiseSpecError(f"unknown fields for {kind}: {sorted(unknown)}")
    d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    spec = cls(**d)
    spec.validate()
    return spec


def _snap(x: np.ndarray) -> np.ndarray:
    return np.round(x * _GRID) / _GRID


def _rng(spec, rng):
    return rng if rng is not None else np.random.default_rng(spec.seed)


# ---------------------------------------------------------------------------
# simulators (each returns the noisy array)

def gaussian_noise(img, spec: Gaussian, rng=None) -> np.ndarray:
    x = as_array(img)
    if spec.var == 0:
        return x.copy()
    n = _rng(spec, rng).normal(0.0, np.sqrt(spec.var), x.shape)
    return _snap(x + n)


def _group_lengths(total: int, lo: int, hi: int, rng) -> List[int]:
    g_min = -(-total // hi)
    g_max = max(total // lo, g_min)
    g = int(rng.integers(g_min, g_max + 1))
    lens = [lo] * g
    extra = total - lo * g
    # distribute the remainder without exceeding hi
    while extra > 0:
        room = [i for i in range(g) if lens[i] < hi]
        if not room:
            break
        lens[room[int(rng.integers(len(room)))]] += 1
        extra -= 1
    return lens


def stripe_columns(width: int, spec: VerticalStriping, rng) -> List[Tuple[int, int]]:
    """Non-adjacent ``(start, length)`` column groups covering ~col_frac of the width."""
    total = int(round(spec.col_frac * width))
    if total == 0 and spec.col_frac > 0:
        total = spec.group_len[0]
    if total == 0:
        return []
    lo, hi = spec.group_len
    total = min(max(total, lo), width)
    lens = _group_lengths(total, lo, min(hi, width), rng)
    for _ in range(1000):
        taken = np.zeros(width + 2, dtype=bool)
        groups = []
        ok = True
        for L in lens:
            start = int(rng.integers(0, width - L + 1))
            if taken[start:start + L + 2].any():
                ok = False
                break
            taken[start:start + L + 2] = True   # keeps a one-column gap
            groups.append((start, L))
        if ok:
            return sorted(groups)
    raise NoiseSpecError("could not place stripe groups; image too narrow for col_frac")


def vertical_striping(img, spec: VerticalStriping = VerticalStriping(), rng=None) -> np.ndarray:
    x = as_array(img)
    if x.shape[1] < 10:
        raise NoiseSpecError("vertical striping needs width >= 10")
    rng = _rng(spec, rng)
    out = x.copy()
    lo, hi = spec.factor_range
    for start, L in stripe_columns(x.shape[1], spec, rng):
        f = rng.uniform(lo, hi) if hi > lo else lo
        out[:, start:start + L] *= f
    return _snap(out)


def iris_noise(img, spec: Iris = Iris(), rng=None) -> np.ndarray:
    """Gaussian, then interlaced row gain, then salt and pepper, then black patches."""
    x = as_array(img)
    h, w = x.shape
    if h < 32 or w < 32:
        raise NoiseSpecError("IRIS noise needs an image of at least 32x32")
    rng = _rng(spec, rng)
    out = x.copy()
    if spec.gaussian and spec.gauss_var > 0:
        out = out + rng.normal(0.0, np.sqrt(spec.gauss_var), x.shape)
    if spec.interlace:
        out[1::2, :] *= spec.interlace_gain
    if spec.salt_pepper and spec.salt_pepper_frac > 0:
        k = int(round(spec.salt_pepper_frac * h * w))
        idx = rng.choice(h * w, size=k, replace=False)
        vals = np.where(rng.random(k) < 0.5, 0.0, 255.0)
        out.ravel()[idx] = vals
    if spec.patches:
        n = int(rng.integers(spec.n_patches[0], spec.n_patches[1] + 1))
        for _ in range(n):
            ph = int(rng.integers(spec.patch_size[0], min(spec.patch_size[1], h) + 1))
            pw = int(rng.integers(spec.patch_size[0], min(spec.patch_size[1], w) + 1))
            r = int(rng.integers(0, h - ph + 1))
            c = int(rng.integers(0, w - pw + 1))
            out[r:r + ph, c:c + pw] = 0.0
    return _snap(out)


def jpeg_like(img, coarseness: float) -> np.ndarray:
    """8x8 block DCT with the standard luminance table scaled by ``coarseness``."""
    x = as_array(img)
    h, w = x.shape
    if h % 8 or w % 8:
        raise NoiseSpecError(f"jpeg_like needs dims divisible by 8, got {x.shape}")
    if coarseness < 0:
        raise NoiseSpecError("coarseness must be >= 0")
    if coarseness == 0:
        return x.copy()
    blocks = (x - 128.0).reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coef = dctn(blocks, axes=(2, 3), norm="ortho")
    # the orthonormal DCT-II matches the JPEG FDCT normalization
    q = JPEG_LUMA_TABLE * coarseness
    coef = np.round(coef / q) * q
    rec = idctn(coef, axes=(2, 3), norm="ortho").transpose(0, 2, 1, 3).reshape(h, w) + 128.0
    return _snap(np.clip(rec, 0.0, 255.0))


def j2k_weights(levels: int) -> List[float]:
    """Step weight per level (1 = finest), doubling toward coarser levels."""
    return [2.0 ** (lev - 1) for lev in range(1, levels + 1)]


def _deadzone(c: np.ndarray, step: float) -> np.ndarray:
    q = np.sign(c) * np.floor(np.abs(c) / step)
    return np.where(q == 0, 0.0, (q + 0.5 * np.sign(q)) * step)


def j2k_like(img, delta: float, levels: int = 4) -> np.ndarray:
    """Dead-zone scalar quantization of the orthonormal wavelet coefficients.

    Level ``l`` uses step ``delta * 2**(l-1)``; the approximation band uses
    the coarsest level's step.
    """
    x = as_array(img)
    if x.shape[0] % 2 ** levels or x.shape[1] % 2 ** levels:
        raise NoiseSpecError(f"j2k_like needs dims divisible by 2^{levels}, got {x.shape}")
    if delta < 0:
        raise NoiseSpecError("delta must be >= 0")
    if delta == 0:
        return x.copy()
    op = ortho_forward(x, levels)
    wts = j2k_weights(levels)
    op.details = [tuple(_deadzone(b, delta * wts[lev]) for b in trio)
                  for lev, trio in enumerate(op.details)]
    op.approx = _deadzone(op.approx, delta * wts[-1])
    return _snap(np.clip(ortho_inverse_array(op), 0.0, 255.0))


def _simulate(x: np.ndarray, spec: NoiseSpec, rng) -> np.ndarray:
    if isinstance(spec, Gaussian):
        return gaussian_noise(x, spec, rng)
    if isinstance(spec, VerticalStriping):
        return vertical_striping(x, spec, rng)
    if isinstance(spec, Iris):
        return iris_noise(x, spec, rng)
    if isinstance(spec, JpegLike):
        return jpeg_like(x, spec.coarseness)
    if isinstance(spec, J2kLike):
        return j2k_like(x, spec.delta, spec.levels)
    raise NoiseSpecError(f"unsupported noise spec {type(spec).__name__}")


def apply_noise(img, spec: NoiseSpec, rng=None) -> Tuple[Image, Image]:
    """Return ``(noisy, residual)`` with ``residual = noisy - img``."""
    spec.validate()
    x = as_array(img)
    noisy = _simulate(x, spec, rng)
    return Image(noisy), Image(noisy - x)


def noise_reference(corpus: Sequence, spec: NoiseSpec, shift=PAIR_SHIFT,
                    n_bins: int = PAIR_BINS, range=NOISE_RANGE) -> Hist2D:
    """Pooled residual pair-histogram over ``corpus`` (image ``k`` uses seed ``[seed, k]``)."""
    if len(corpus) < 10:
        raise ValueError(f"noise_reference needs >= 10 images, got {len(corpus)}")
    hists = []
    for k, img in enumerate(corpus):
        _, res = apply_noise(img, spec, np.random.default_rng([spec.seed, k]))
        hists.append(pair_hist(res, shift, n_bins, range))
    return merge_hists(hists)


def with_seed(spec: NoiseSpec, seed: int) -> NoiseSpec:
    return replace(spec, seed=int(seed))


__all__ = [
    "Gaussian", "VerticalStriping", "Iris", "JpegLike", "J2kLike", "NoiseSpec", "NoiseSpecError",
    "PRESETS", "apply_noise", "gaussian_noise", "vertical_striping", "iris_noise", "jpeg_like",
    "j2k_like", "j2k_weights", "noise_reference", "spec_to_dict", "spec_from_dict", "with_seed",
    "stripe_columns", "JPEG_LUMA_TABLE",
]
