"""Offline calibration: everything the blind denoiser needs besides the noisy image.

A :class:`Calibration` holds the penalty profile, the transformed noise
std per band, the signal and noise reference pair histograms, the
equivalent white-noise sigma and optimized soft thresholds.  It round-trips
through JSON with numbers at 6 significant digits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence

import numpy as np

from .denoise import (MIN_CORPUS, DenoiseConfig, Profiles, c_profile, noise_std_from_samples,
                      noise_std_white, optimize_st_thresholds, signal_reference)
from .imagio import as_array
from .kern import KernelSpec, fit_widths
from .noisegen import Gaussian, NoiseSpec, apply_noise, noise_reference, spec_from_dict, spec_to_dict
from .stats import Hist2D, corpus_bands, mi_map
from .xform import SteerableSpec, band_name, noise_gain, parse_band_name

log = logging.getLogger(__name__)


def round6(obj):
    """Recursively round floats to 6 significant digits (stable JSON output)."""
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round6(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(f"{float(obj):.6g}")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _hist_to_dict(h: Hist2D) -> dict:
    # uniform binning is stored as its range so edges survive rounding exactly
    return {"range_x": [float(h.edges_x[0]), float(h.edges_x[-1])],
            "range_y": [float(h.edges_y[0]), float(h.edges_y[-1])],
            "prob": h.prob.tolist(), "count": int(h.count)}


def _hist_from_dict(d: dict) -> Hist2D:
    p = np.asarray(d["prob"], dtype=np.float64)
    nx, ny = p.shape
    ex = np.linspace(*d["range_x"], nx + 1)
    ey = np.linspace(*d["range_y"], ny + 1)
    # stored values are rounded; renormalizing here would make save/load/save drift
    return Hist2D(ex, ey, p, int(d["count"]))


@dataclass
class Calibration:
    noise: NoiseSpec
    profiles: Profiles
    signal_ref: Hist2D
    noise_ref: Hist2D
    sigma_equiv: float
    st_thresholds: Dict[str, float]
    transform: SteerableSpec = field(default_factory=SteerableSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    fitted_widths: Dict[str, list] | None = None
    n_images: int = 0
    gains: Dict[object, float] | None = None

    def config(self, tau_grid=None, **kw) -> DenoiseConfig:
        args = dict(profiles=self.profiles, kernel=self.kernel, transform=self.transform)
        if tau_grid is not None:
            args["tau_grid"] = tuple(tau_grid)
        args.update(kw)
        return DenoiseConfig(**args)

    def to_dict(self) -> dict:
        return round6({
            "noise": spec_to_dict(self.noise),
            "profiles": self.profiles.to_dict(),
            "sigma_equiv": self.sigma_equiv,
            "st_thresholds": self.st_thresholds,
            "transform": self.transform.to_dict(),
            "kernel": self.kernel.to_dict(),
            "fitted_widths": self.fitted_widths,
            "n_images": self.n_images,
            "gains": None if self.gains is None else {band_name(k): v for k, v in self.gains.items()},
            "signal_ref": _hist_to_dict(self.signal_ref),
            "noise_ref": _hist_to_dict(self.noise_ref),
        })

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        t = d["transform"]
        k = d["kernel"]
        return cls(
            noise=spec_from_dict(d["noise"]),
            profiles=Profiles.from_dict(d["profiles"]),
            signal_ref=_hist_from_dict(d["signal_ref"]),
            noise_ref=_hist_from_dict(d["noise_ref"]),
            sigma_equiv=float(d["sigma_equiv"]),
            st_thresholds={str(a): float(b) for a, b in d["st_thresholds"].items()},
            transform=SteerableSpec(int(t["n_scales"]), int(t["n_orients"]), tuple(t["image_dims"])),
            kernel=KernelSpec(float(k["sigma1"]), float(k["sigma2"]), float(k.get("alpha", 0.0)),
                              bool(k.get("isotropic", False))),
            fitted_widths=d.get("fitted_widths"),
            n_images=int(d.get("n_images", 0)),
            gains=None if d.get("gains") is None else
            {parse_band_name(k): float(v) for k, v in d["gains"].items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Calibration":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"calibration file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def calibrate(corpus: Sequence, noise: NoiseSpec, kernel: KernelSpec | None = None,
              transform: SteerableSpec | None = None, c_global: float = 1000.0,
              tau: float = 2.5, st_images: int = 30, strict: bool = True,
              fit_kernel: bool = False, mi_bins: int = 256) -> Calibration:
    """Build profiles and reference histograms from a clean corpus.

    Noise std per band: ``sigma_n * gain`` for white Gaussian noise, else
    the pooled band RMS of simulated residuals.  ``sigma_equiv`` is the RMS
    of the simulated residuals and parametrizes the thresholding baselines.
    With ``strict=False`` corpora smaller than 10 images are accepted with
    a warning.  ``fit_kernel`` also fits kernel widths to the finest-scale
    MI maps (recorded only; denoising uses ``kernel``).
    """
    corpus = [as_array(im) for im in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    if len(corpus) < MIN_CORPUS:
        if strict:
            raise ValueError(f"calibration needs >= {MIN_CORPUS} images, got {len(corpus)}")
        log.warning("corpus has only %d images (< %d); profiles will be noisy",
                    len(corpus), MIN_CORPUS)
        # pad by cycling so the per-image statistics stay well defined
        corpus = [corpus[i % len(corpus)] for i in range(MIN_CORPUS)]
    transform = transform or SteerableSpec(image_dims=corpus[0].shape)
    kernel = kernel or KernelSpec()
    k = c_profile(corpus, transform)
    residuals = [apply_noise(im, noise, np.random.default_rng([noise.seed, i]))[1].data
                 for i, im in enumerate(corpus)]
    sigma_equiv = float(np.sqrt(np.mean([np.mean(r * r) for r in residuals])))
    if isinstance(noise, Gaussian):
        nstd = noise_std_white(transform, float(np.sqrt(noise.var)))
        sigma_n = float(np.sqrt(noise.var))
    else:
        nstd = noise_std_from_samples(residuals, transform)
        sigma_n = sigma_equiv
    prof = Profiles(k, nstd, c_global, tau, sigma_n)
    sref = signal_reference(corpus)
    nref = noise_reference(corpus, noise)
    st = optimize_st_thresholds(corpus[:max(st_images, MIN_CORPUS)], sigma_equiv, seed=noise.seed)
    fitted = None
    if fit_kernel:
        keys = [(1, o) for o in range(transform.n_orients)]
        bands = corpus_bands(corpus, transform, keys)
        fitted = {}
        for key in keys:
            m = mi_map(bands[key], mi_bins, band=key, alpha=transform.angle(key[1]))
            fitted[band_name(key)] = list(fit_widths(m))
    return Calibration(noise, prof, sref, nref, sigma_equiv, st, transform, kernel,
                       fitted, len(corpus), noise_gain(transform))


__all__ = ["Calibration", "calibrate", "round6"]
