"""Multiscale transforms.

* A real, redundant steerable pyramid built in the Fourier domain
  (raised-cosine radial masks in log-radius, ``cos**(K-1)`` angular masks).
  All filters are applied with orthonormal FFTs so the analysis operator is a
  Parseval tight frame: its adjoint is its inverse.
* An orthonormal separable wavelet (periodized) for the thresholding
  baselines and the JPEG2000-like quantizer.
* Monte-Carlo estimates of per-subband noise gains, ``diag(T T^T)^(1/2)``.

Coordinates: arrays are indexed ``[row, col]``; a band with orientation
index ``o`` has its preferred spatial direction (the direction along which
coefficients are most alike) at angle ``o * pi / n_orients`` measured from
the column axis towards increasing rows.  Its frequency tuning is
perpendicular to that.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from pathlib import Path
from typing import Dict, Iterator, Tuple

import numpy as np
import pywt

from .imagio import Image, as_array

HIGHPASS = "hp"
LOWPASS = "lp"


@dataclass(frozen=True)
class SteerableSpec:
    n_scales: int = 4
    n_orients: int = 8
    image_dims: Tuple[int, int] = (256, 256)

    def __post_init__(self):
        if self.n_scales < 1 or self.n_orients < 1:
            raise ValueError("n_scales and n_orients must be >= 1")
        dims = tuple(int(d) for d in self.image_dims)
        object.__setattr__(self, "image_dims", dims)
        f = 2 ** self.n_scales
        if dims[0] % f or dims[1] % f:
            raise ValueError(f"image dims {dims} not divisible by 2**n_scales = {f}")

    def band_dims(self, scale: int) -> Tuple[int, int]:
        f = 2 ** (scale - 1)
        return self.image_dims[0] // f, self.image_dims[1] // f

    def lowpass_dims(self) -> Tuple[int, int]:
        f = 2 ** self.n_scales
        return self.image_dims[0] // f, self.image_dims[1] // f

    def angle(self, orient: int) -> float:
        """Preferred spatial direction of orientation ``orient`` (radians)."""
        return orient * np.pi / self.n_orients

    def band_keys(self):
        return [(s, o) for s in range(1, self.n_scales + 1) for o in range(self.n_orients)]

    def to_dict(self):
        return {"n_scales": self.n_scales, "n_orients": self.n_orients,
                "image_dims": list(self.image_dims)}


@dataclass(frozen=True)
class OrthoSpec:
    levels: int = 4
    wavelet: str = "db4"
    image_dims: Tuple[int, int] = (256, 256)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.image_dims)
        object.__setattr__(self, "image_dims", dims)
        f = 2 ** self.levels
        if self.levels < 1 or dims[0] % f or dims[1] % f:
            raise ValueError(f"image dims {dims} not divisible by 2**levels = {f}")


@dataclass
class Pyramid:
    highpass: np.ndarray
    bands: Dict[Tuple[int, int], np.ndarray]
    lowpass: np.ndarray
    spec: SteerableSpec

    def items(self) -> Iterator[Tuple[object, np.ndarray]]:
        """Yield ``(band_id, coefficients)`` for every subband, highpass first."""
        yield HIGHPASS, self.highpass
        for key in self.spec.band_keys():
            yield key, self.bands[key]
        yield LOWPASS, self.lowpass

    def copy(self) -> "Pyramid":
        return Pyramid(self.highpass.copy(), {k: v.copy() for k, v in self.bands.items()},
                       self.lowpass.copy(), self.spec)

    def scale(self, a: float) -> "Pyramid":
        return Pyramid(a * self.highpass, {k: a * v for k, v in self.bands.items()},
                       a * self.lowpass, self.spec)


def band_name(band_id) -> str:
    if isinstance(band_id, tuple):
        return f"s{band_id[0]}o{band_id[1]}"
    return str(band_id)


def parse_band_name(name: str):
    if name in (HIGHPASS, LOWPASS):
        return name
    if name.startswith("s") and "o" in name:
        s, o = name[1:].split("o")
        return int(s), int(o)
    if name.startswith("L") and name[1:2].isdigit():
        return name
    raise ValueError(f"unrecognised band name {name!r}")


# ---------------------------------------------------------------------------
# steerable pyramid

def _freq_grid(h: int, w: int):
    """Centered frequency grid normalized so that Nyquist is 1."""
    fy = (np.arange(h) - h // 2) / (h / 2.0)
    fx = (np.arange(w) - w // 2) / (w / 2.0)
    FX, FY = np.meshgrid(fx, fy)
    rad = np.hypot(FX, FY)
    # avoid log(0) at DC; value irrelevant because every band mask vanishes there
    rad[h // 2, w // 2] = rad[h // 2, max(w // 2 - 1, 0)] or 1.0
    return np.log2(rad), np.arctan2(FY, FX)


def _hi_mask(log_rad, edge):
    """Raised-cosine highpass over log2-radius ``[edge - 1, edge]``."""
    t = np.clip(edge - log_rad, 0.0, 1.0)
    return np.cos(0.5 * np.pi * t)


def _lo_mask(log_rad, edge):
    t = np.clip(edge - log_rad, 0.0, 1.0)
    return np.sin(0.5 * np.pi * t)


def _angle_masks(angle, n_orients):
    order = n_orients - 1
    const = (2.0 ** (2 * order)) * factorial(order) ** 2 / (n_orients * factorial(2 * order))
    masks = []
    for o in range(n_orients):
        tuning = o * np.pi / n_orients + 0.5 * np.pi
        masks.append(np.sqrt(const) * np.cos(angle - tuning) ** order)
    phase = (-1j) ** order
    return masks, phase


class _Filters:
    """Per-level masks for one (image size, spec), cached."""

    def __init__(self, spec: SteerableSpec):
        h, w = spec.image_dims
        log_rad, _ = _freq_grid(h, w)
        self.hi0 = _hi_mask(log_rad, 0.0)
        self.lo0 = _lo_mask(log_rad, 0.0)
        self.levels = []
        for s in range(spec.n_scales):
            lh, lw = h >> s, w >> s
            log_rad, angle = _freq_grid(lh, lw)
            amasks, phase = _angle_masks(angle, spec.n_orients)
            him = _hi_mask(log_rad, -1.0)
            lom = _lo_mask(log_rad, -1.0)
            self.levels.append({
                "bands": [phase * him * a for a in amasks],
                "lo": lom,
                "shape": (lh, lw),
            })


_FILTER_CACHE: Dict[SteerableSpec, _Filters] = {}


def _filters(spec: SteerableSpec) -> _Filters:
    f = _FILTER_CACHE.get(spec)
    if f is None:
        f = _FILTER_CACHE[spec] = _Filters(spec)
    return f


def _fft(x):
    return np.fft.fftshift(np.fft.fft2(x, norm="ortho"))


def _ifft_real(X):
    return np.real(np.fft.ifft2(np.fft.ifftshift(X), norm="ortho"))


def _crop(X):
    h, w = X.shape
    return X[h // 2 - h // 4: h // 2 - h // 4 + h // 2, w // 2 - w // 4: w // 2 - w // 4 + w // 2]


def _pad(X):
    h, w = X.shape
    out = np.zeros((2 * h, 2 * w), dtype=X.dtype)
    out[h - h // 2: h - h // 2 + h, w - w // 2: w - w // 2 + w] = X
    return out


def _spec_for(img, spec):
    arr = as_array(img)
    if spec is None:
        spec = SteerableSpec(image_dims=arr.shape)
    elif tuple(spec.image_dims) != arr.shape:
        spec = SteerableSpec(spec.n_scales, spec.n_orients, arr.shape)
    return arr, spec


def steerable_forward(img, spec: SteerableSpec | None = None) -> Pyramid:
    """Decompose ``img`` into highpass, ``n_scales x n_orients`` bands and lowpass.

    ``spec.image_dims`` is taken from the image.  Dimensions must be
    divisible by ``2**n_scales``.
    """
    arr, spec = _spec_for(img, spec)
    filt = _filters(spec)
    X = _fft(arr)
    highpass = _ifft_real(filt.hi0 * X)
    lodft = filt.lo0 * X
    bands = {}
    for s, lev in enumerate(filt.levels, start=1):
        for o, bm in enumerate(lev["bands"]):
            bands[(s, o)] = _ifft_real(bm * lodft)
        lodft = _crop(lev["lo"] * lodft)
    lowpass = _ifft_real(lodft)
    return Pyramid(highpass, bands, lowpass, spec)


def steerable_inverse(pyr: Pyramid) -> Image:
    """Adjoint (= inverse) of :func:`steerable_forward`."""
    return Image(steerable_inverse_array(pyr))


def steerable_inverse_array(pyr: Pyramid) -> np.ndarray:
    spec = pyr.spec
    filt = _filters(spec)
    if pyr.highpass.shape != spec.image_dims or pyr.lowpass.shape != spec.lowpass_dims():
        raise ValueError("pyramid shape does not match its spec")
    lodft = _fft(pyr.lowpass)
    for s in range(spec.n_scales, 0, -1):
        lev = filt.levels[s - 1]
        lodft = lev["lo"] * _pad(lodft)
        for o, bm in enumerate(lev["bands"]):
            band = pyr.bands[(s, o)]
            if band.shape != lev["shape"]:
                raise ValueError(f"band {(s, o)} has shape {band.shape}, expected {lev['shape']}")
            lodft = lodft + np.conj(bm) * _fft(band)
    X = filt.lo0 * lodft + filt.hi0 * _fft(pyr.highpass)
    return _ifft_real(X)


def zeros_like_pyramid(spec: SteerableSpec) -> Pyramid:
    bands = {k: np.zeros(spec.band_dims(k[0])) for k in spec.band_keys()}
    return Pyramid(np.zeros(spec.image_dims), bands, np.zeros(spec.lowpass_dims()), spec)


def analytic_gains(spec: SteerableSpec) -> Dict[object, float]:
    """Exact per-band std of coefficients for unit-variance white noise.

    Reference values for :func:`noise_gain`; computed from the filter masks
    (mean squared magnitude of the cascaded frequency response).
    """
    filt = _filters(spec)
    out = {HIGHPASS: float(np.sqrt(np.mean(filt.hi0 ** 2)))}
    cascade = filt.lo0 ** 2
    for s, lev in enumerate(filt.levels, start=1):
        for o, bm in enumerate(lev["bands"]):
            # energy per coefficient = sum |H|^2 / (pixels of full image) * (subsampling)
            out[(s, o)] = float(np.sqrt(np.sum(np.abs(bm) ** 2 * cascade) / cascade.size))
        cascade = _crop(lev["lo"] ** 2 * cascade)
    out[LOWPASS] = float(np.sqrt(np.sum(cascade) / cascade.size))
    return out


# ---------------------------------------------------------------------------
# orthonormal wavelet

@dataclass
class OrthoPyramid:
    approx: np.ndarray
    details: list  # details[l-1] = (H, V, D) at level l, l = 1 is finest
    spec: OrthoSpec = field(default_factory=OrthoSpec)

    @property
    def levels(self) -> int:
        return len(self.details)

    def items(self):
        for lev, trio in enumerate(self.details, start=1):
            for name, band in zip("HVD", trio):
                yield f"L{lev}{name}", band
        yield "A", self.approx

    def coefficient_count(self) -> int:
        return self.approx.size + sum(b.size for trio in self.details for b in trio)


def ortho_forward(img, levels: int = 4, wavelet: str = "db4") -> OrthoPyramid:
    arr = as_array(img)
    spec = OrthoSpec(levels, wavelet, arr.shape)
    coeffs = pywt.wavedec2(arr, wavelet, mode="periodization", level=levels)
    approx = coeffs[0]
    details = [tuple(np.asarray(b) for b in trio) for trio in reversed(coeffs[1:])]
    return OrthoPyramid(approx, details, spec)


def ortho_inverse(op: OrthoPyramid) -> Image:
    return Image(ortho_inverse_array(op))


def ortho_inverse_array(op: OrthoPyramid) -> np.ndarray:
    coeffs = [op.approx] + [tuple(t) for t in reversed(op.details)]
    out = pywt.waverec2(coeffs, op.spec.wavelet, mode="periodization")
    if out.shape != tuple(op.spec.image_dims):
        raise ValueError(f"reconstruction shape {out.shape} != {op.spec.image_dims}")
    return out


# ---------------------------------------------------------------------------
# noise gains

def _transform_bands(x, spec):
    if isinstance(spec, SteerableSpec):
        return steerable_forward(x, spec).items()
    if isinstance(spec, OrthoSpec):
        return ortho_forward(x, spec.levels, spec.wavelet).items()
    raise TypeError(f"unsupported transform spec {type(spec).__name__}")


def noise_gain(spec, n_mc: int = 100, seed: int = 0) -> Dict[object, float]:
    """Per-subband std of transform coefficients of unit-variance white noise.

    Monte-Carlo estimate of ``diag(T T^T)^(1/2)`` (constant within a
    subband).  Works for :class:`SteerableSpec` and :class:`OrthoSpec`.
    Results are cached per ``(spec, n_mc, seed)``.
    """
    return dict(_noise_gain_cached(spec, n_mc, seed))


@lru_cache(maxsize=16)
def _noise_gain_cached(spec, n_mc, seed):
    if n_mc < 10:
        raise ValueError("noise_gain needs n_mc >= 10")
    rng = np.random.default_rng(seed)
    sums: Dict[object, float] = {}
    counts: Dict[object, int] = {}
    for _ in range(n_mc):
        x = rng.standard_normal(spec.image_dims)
        for key, band in _transform_bands(x, spec):
            sums[key] = sums.get(key, 0.0) + float(np.sum(band * band))
            counts[key] = counts.get(key, 0) + band.size
    return {k: float(np.sqrt(sums[k] / counts[k])) for k in sums}


def band_std_profile(images, spec: SteerableSpec) -> Dict[object, float]:
    """Pooled per-subband RMS of steerable coefficients over ``images``.

    With noise residual images this is the empirical route to
    ``diag(T Sigma_n T^T)^(1/2)``.
    """
    sums: Dict[object, float] = {}
    counts: Dict[object, int] = {}
    for im in images:
        for key, band in steerable_forward(im, spec).items():
            sums[key] = sums.get(key, 0.0) + float(np.sum(band * band))
            counts[key] = counts.get(key, 0) + band.size
    if not sums:
        raise ValueError("band_std_profile: no images")
    return {k: float(np.sqrt(sums[k] / counts[k])) for k in sums}


# ---------------------------------------------------------------------------
# serialization

def save_pyramid(pyr: Pyramid, directory) -> None:
    """Write every band as raw little-endian float32 plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for key, band in pyr.items():
        name = band_name(key)
        fname = f"{name}.f32"
        np.asarray(band, dtype="<f4").tofile(directory / fname)
        entry = {"name": name, "file": fname, "dims": list(band.shape)}
        if isinstance(key, tuple):
            entry.update(scale=key[0], orientation=key[1], angle=pyr.spec.angle(key[1]))
        entries.append(entry)
    manifest = {"spec": pyr.spec.to_dict(), "dtype": "float32-le", "bands": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_pyramid(directory) -> Pyramid:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    sd = manifest["spec"]
    spec = SteerableSpec(sd["n_scales"], sd["n_orients"], tuple(sd["image_dims"]))
    arrays = {}
    for e in manifest["bands"]:
        data = np.fromfile(directory / e["file"], dtype="<f4").astype(np.float64)
        arrays[parse_band_name(e["name"])] = data.reshape(e["dims"])
    bands = {k: v for k, v in arrays.items() if isinstance(k, tuple)}
    return Pyramid(arrays[HIGHPASS], bands, arrays[LOWPASS], spec)
