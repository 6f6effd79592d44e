"""SVR denoising in the steerable domain, KLD-driven tau selection, and
wavelet thresholding baselines.

Pipeline for a fixed tau:

1. steerable_forward of the noisy image;
2. every oriented band and the highpass residual is tiled into 16x16
   patches; each patch is an SVR problem with the band's kernel (rotated to
   the band angle, isotropic for the highpass), tube widths
   ``eps = tau * noise_std[band]`` and penalties ``c = C * k[scale]``;
3. the estimate ``K alpha`` replaces the patch, the lowpass passes through;
4. steerable_inverse and clipping to [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import svr
from .imagio import PATCH_SIZE, Image, as_array
from .kern import KernelSpec, patch_kernel
from .stats import NOISE_RANGE, SIGNAL_RANGE, Hist2D, kld, merge_hists, pair_hist
from .xform import (HIGHPASS, LOWPASS, Pyramid, SteerableSpec, band_name, band_std_profile,
                    noise_gain, ortho_forward, ortho_inverse_array, parse_band_name,
                    steerable_forward, steerable_inverse_array)

C_GLOBAL = 1000.0
TAU_GRID = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
TAU_RANGE = (0.5, 3.0)
DENOISE_TOL = 1e-3
DENOISE_MAX_SWEEPS = 5000
HT_FACTOR = 3.0
HT_LEVELS = 4
MIN_CORPUS = 10


def _key_str(key) -> str:
    return key if isinstance(key, str) else band_name(key)


def _key_parse(name: str):
    return parse_band_name(name)


def band_scale(key) -> int:
    """Scale index used for the penalty profile: 0 for the highpass residual."""
    if key == HIGHPASS:
        return 0
    if key == LOWPASS:
        raise ValueError("the lowpass residual has no penalty profile")
    return int(key[0])


# ---------------------------------------------------------------------------
# profiles

@dataclass
class Profiles:
    """Penalty weights per scale and transformed noise std per band.

    ``noise_std[band] = diag(T Sigma_n T^T)^(1/2)`` for that band; for white
    noise it is ``sigma_n * gain[band]``.
    """

    k_scale: Dict[int, float]
    noise_std: Dict[object, float]
    c_global: float = C_GLOBAL
    tau: float = 2.5
    sigma_n: float | None = None

    def __post_init__(self):
        if not self.k_scale or any(not v > 0 for v in self.k_scale.values()):
            raise ValueError("k_scale entries must be positive")
        if any(not v >= 0 for v in self.noise_std.values()):
            raise ValueError("noise_std entries must be nonnegative")
        if not self.c_global > 0:
            raise ValueError("c_global must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def to_dict(self) -> dict:
        return {
            "k_scale": {str(k): v for k, v in sorted(self.k_scale.items())},
            "noise_std": {_key_str(k): v for k, v in self.noise_std.items()},
            "c_global": self.c_global,
            "tau": self.tau,
            "sigma_n": self.sigma_n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Profiles":
        return cls({int(k): float(v) for k, v in d["k_scale"].items()},
                   {_key_parse(k): float(v) for k, v in d["noise_std"].items()},
                   float(d.get("c_global", C_GLOBAL)), float(d.get("tau", 2.5)),
                   d.get("sigma_n"))


def c_profile(corpus: Sequence, spec: SteerableSpec | None = None) -> Dict[int, float]:
    """``k_s``: corpus mean of per-image std of the scale-``s`` coefficients.

    Scale 0 is the highpass residual; oriented bands of a scale are pooled.
    """
    if len(corpus) < MIN_CORPUS:
        raise ValueError(f"c_profile needs >= {MIN_CORPUS} images, got {len(corpus)}")
    acc: Dict[int, List[float]] = {}
    for img in corpus:
        pyr = steerable_forward(img, spec)
        acc.setdefault(0, []).append(float(np.std(pyr.highpass)))
        for s in range(1, pyr.spec.n_scales + 1):
            vals = np.concatenate([pyr.bands[(s, o)].ravel() for o in range(pyr.spec.n_orients)])
            acc.setdefault(s, []).append(float(np.std(vals)))
    k = {s: float(np.mean(v)) for s, v in acc.items()}
    if any(v <= 1e-6 for v in k.values()):
        raise ValueError("degenerate corpus: a scale has (near) zero coefficient std")
    return k


def eps_profile(gains: Dict[object, float], sigma_n: float, tau: float) -> Dict[object, float]:
    """Tube width per band, ``tau * sigma_n * gain``."""
    if sigma_n < 0 or tau < 0:
        raise ValueError("sigma_n and tau must be nonnegative")
    return {k: tau * sigma_n * g for k, g in gains.items()}


def noise_std_white(spec: SteerableSpec, sigma_n: float, n_mc: int = 100, seed: int = 0) -> Dict[object, float]:
    if sigma_n < 0:
        raise ValueError("sigma_n must be nonnegative")
    return {k: sigma_n * g for k, g in noise_gain(spec, n_mc, seed).items()}


def noise_std_from_samples(residuals: Sequence, spec: SteerableSpec | None = None) -> Dict[object, float]:
    """Empirical ``diag(T Sigma_n T^T)^(1/2)`` per band from noise residual images."""
    residuals = list(residuals)
    if not residuals:
        raise ValueError("no residual samples")
    spec = spec or SteerableSpec(image_dims=as_array(residuals[0]).shape)
    return band_std_profile(residuals, spec)


def noise_std_from_covariance(cov: np.ndarray, spec: SteerableSpec) -> Dict[object, float]:
    """Per-band RMS of ``diag(T Sigma T^T)^(1/2)`` for a full pixel covariance.

    ``cov`` is ``N x N`` over row-major pixels, ``N = h * w``; use on small
    images only (one transform per pixel).
    """
    h, w = spec.image_dims
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (h * w, h * w):
        raise ValueError(f"covariance must be {(h * w, h * w)}, got {cov.shape}")
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if vals[0] < -1e-10 * max(vals[-1], 1e-300):
        raise ValueError("covariance is not positive semidefinite")
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    acc: Dict[object, np.ndarray] = {}
    for j in range(h * w):
        for key, band in steerable_forward(root[:, j].reshape(h, w), spec).items():
            acc[key] = acc.get(key, 0.0) + band * band
    return {k: float(np.sqrt(np.mean(v))) for k, v in acc.items()}


# ---------------------------------------------------------------------------
# configuration

@dataclass
class DenoiseConfig:
    profiles: Profiles
    kernel: KernelSpec = field(default_factory=KernelSpec)
    transform: SteerableSpec = field(default_factory=SteerableSpec)
    tau_grid: Tuple[float, ...] = TAU_GRID
    tol: float = DENOISE_TOL
    max_sweeps: int = DENOISE_MAX_SWEEPS
    patch_size: int = PATCH_SIZE

    def __post_init__(self):
        self.tau_grid = tuple(float(t) for t in self.tau_grid)
        if not self.tau_grid:
            raise ValueError("tau_grid must be nonempty")
        if any(b <= a for a, b in zip(self.tau_grid, self.tau_grid[1:])):
            raise ValueError("tau_grid must be strictly ascending")
        if any(t <= 0 for t in self.tau_grid):
            raise ValueError("tau values must be positive")

    def band_kernel(self, key) -> KernelSpec:
        if key == HIGHPASS:
            return self.kernel.isotropic_version()
        return self.kernel.for_band(self.transform.angle(key[1]))


# ---------------------------------------------------------------------------
# SVR pipeline

@dataclass
class BandState:
    """Warm-start store: dual coefficients per band and patch shape."""
    alpha: Dict[Tuple[object, Tuple[int, int]], np.ndarray] = field(default_factory=dict)


def _patch_groups(shape: Tuple[int, int], ps: int):
    """Row-major patch origins grouped by patch shape (ragged edges allowed)."""
    h, w = shape
    groups: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for r in range(0, h, ps):
        for c in range(0, w, ps):
            groups.setdefault((min(ps, h - r), min(ps, w - c)), []).append((r, c))
    return groups


def svr_band(band: np.ndarray, key, cfg: DenoiseConfig, tau: float,
             state: BandState | None = None, stats: dict | None = None) -> np.ndarray:
    """SVR-regularize one band patch by patch; returns the estimated band."""
    prof = cfg.profiles
    eps = tau * prof.noise_std[key]
    c = prof.c_global * prof.k_scale[band_scale(key)]
    kspec = cfg.band_kernel(key)
    out = np.empty_like(band)
    for shape, origins in sorted(_patch_groups(band.shape, cfg.patch_size).items()):
        ph, pw = shape
        K = patch_kernel(shape, kspec)
        Y = np.stack([band[r:r + ph, cc:cc + pw].ravel() for r, cc in origins])
        init = state.alpha.get((key, shape)) if state is not None else None
        A, sweeps, viol = svr.solve_batch(K, Y, eps, c, cfg.tol, cfg.max_sweeps, init=init)
        if state is not None:
            state.alpha[(key, shape)] = A
        if stats is not None:
            stats["problems"] = stats.get("problems", 0) + len(origins)
            stats["sweeps"] = stats.get("sweeps", 0) + int(sweeps.sum())
            stats["unconverged"] = stats.get("unconverged", 0) + int(np.sum(viol > cfg.tol))
            stats["nonzero"] = stats.get("nonzero", 0) + int(np.count_nonzero(A))
        est = A @ K
        for (r, cc), row in zip(origins, est):
            out[r:r + ph, cc:cc + pw] = row.reshape(ph, pw)
    return out


def denoise_pyramid(pyr: Pyramid, cfg: DenoiseConfig, tau: float,
                    state: BandState | None = None, stats: dict | None = None) -> Pyramid:
    out = pyr.copy()
    out.highpass = svr_band(pyr.highpass, HIGHPASS, cfg, tau, state, stats)
    for key in pyr.spec.band_keys():
        out.bands[key] = svr_band(pyr.bands[key], key, cfg, tau, state, stats)
    return out


def denoise_once(noisy, cfg: DenoiseConfig, tau: float | None = None,
                 state: BandState | None = None, stats: dict | None = None) -> Tuple[Image, Image]:
    """Return ``(estimate, noise_estimate)`` for one tau (default ``cfg.profiles.tau``)."""
    tau = cfg.profiles.tau if tau is None else float(tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    x = as_array(noisy)
    pyr = steerable_forward(x, cfg.transform if tuple(cfg.transform.image_dims) == x.shape
                            else SteerableSpec(cfg.transform.n_scales, cfg.transform.n_orients, x.shape))
    est = np.clip(steerable_inverse_array(denoise_pyramid(pyr, cfg, tau, state, stats)), 0.0, 255.0)
    return Image(est), Image(x - est)


@dataclass
class TauSelection:
    tau: float
    estimate: Image
    noise_estimate: Image
    scores: List[Tuple[float, float, float]]          # (tau, kld_signal, kld_noise)
    estimates: Dict[float, Image]

    def __iter__(self):
        yield self.tau
        yield self.estimate

    def score(self, tau: float) -> float:
        for t, a, b in self.scores:
            if t == tau:
                return a + b
        raise KeyError(tau)


def kld_score(estimate, noise_estimate, signal_ref: Hist2D, noise_ref: Hist2D) -> Tuple[float, float]:
    """Second-order KLD of the estimate and the noise estimate against their references."""
    ps = pair_hist(estimate, n_bins=signal_ref.prob.shape[0],
                   range=(float(signal_ref.edges_x[0]), float(signal_ref.edges_x[-1])))
    pn = pair_hist(noise_estimate, n_bins=noise_ref.prob.shape[0],
                   range=(float(noise_ref.edges_x[0]), float(noise_ref.edges_x[-1])))
    return kld(ps, signal_ref), kld(pn, noise_ref)


def select_tau(noisy, signal_ref: Hist2D, noise_ref: Hist2D, cfg: DenoiseConfig,
               warm_start: bool = True) -> TauSelection:
    """Exhaustive search over ``cfg.tau_grid`` minimizing the summed KLDs.

    Grid points are visited in ascending order; with ``warm_start`` each
    solve starts from the previous tau's dual coefficients.  Ties go to the
    smaller tau.
    """
    if not cfg.tau_grid:
        raise ValueError("empty tau grid")
    state = BandState() if warm_start else None
    scores, estimates, noises = [], {}, {}
    for tau in cfg.tau_grid:
        est, nest = denoise_once(noisy, cfg, tau, state)
        ks, kn = kld_score(est, nest, signal_ref, noise_ref)
        scores.append((tau, ks, kn))
        estimates[tau], noises[tau] = est, nest
    best = min(range(len(scores)), key=lambda i: (scores[i][1] + scores[i][2], i))
    t = scores[best][0]
    return TauSelection(t, estimates[t], noises[t], scores, estimates)


def signal_reference(corpus: Sequence, n_bins: int = 64, range=SIGNAL_RANGE) -> Hist2D:
    """Pooled pair histogram of clean corpus images."""
    if not corpus:
        raise ValueError("empty corpus")
    return merge_hists([pair_hist(im, n_bins=n_bins, range=range) for im in corpus])


# ---------------------------------------------------------------------------
# thresholding baselines (orthonormal wavelet, 4 levels)

def _ortho_band_names(levels: int) -> List[str]:
    return [f"L{lev}{o}" for lev in range(1, levels + 1) for o in "HVD"]


def hard_threshold(noisy, sigma_n: float, levels: int = HT_LEVELS, factor: float = HT_FACTOR) -> Image:
    """Zero detail coefficients with ``|c| <= factor * sigma_n``; keep the rest."""
    if sigma_n < 0:
        raise ValueError("sigma_n must be nonnegative")
    lam = factor * sigma_n
    op = ortho_forward(noisy, levels)
    op.details = [tuple(np.where(np.abs(b) <= lam, 0.0, b) if lam > 0 else b for b in trio)
                  for trio in op.details]
    return Image(np.clip(ortho_inverse_array(op), 0.0, 255.0))


def _soft(c, lam):
    return np.sign(c) * np.maximum(np.abs(c) - lam, 0.0)


def soft_threshold(noisy, thresholds, levels: int = HT_LEVELS) -> Image:
    """Shrink detail band ``b`` by ``thresholds[b]`` (dict by name ``L<l><H|V|D>`` or a flat list)."""
    names = _ortho_band_names(levels)
    if not isinstance(thresholds, dict):
        thresholds = dict(zip(names, thresholds))
    if set(thresholds) != set(names):
        raise ValueError(f"thresholds must cover bands {names}")
    if any(v < 0 for v in thresholds.values()):
        raise ValueError("thresholds must be nonnegative")
    op = ortho_forward(noisy, levels)
    op.details = [tuple(_soft(b, thresholds[f"L{lev}{o}"]) for o, b in zip("HVD", trio))
                  for lev, trio in enumerate(op.details, start=1)]
    return Image(np.clip(ortho_inverse_array(op), 0.0, 255.0))


def optimize_st_thresholds(corpus: Sequence, sigma_n: float, levels: int = HT_LEVELS,
                           seed: int = 0) -> Dict[str, float]:
    """Per-band soft thresholds minimizing corpus MSE under Gaussian noise.

    The transform is orthonormal, so (before clipping) image MSE is the sum
    of per-band coefficient errors and each band is optimized on its own:
    bounded Brent search on ``[0, 6 sigma_n]``.  Image ``k`` is corrupted
    with seed ``[seed, k]``.
    """
    if len(corpus) < MIN_CORPUS:
        raise ValueError(f"optimize_st_thresholds needs >= {MIN_CORPUS} images")
    names = _ortho_band_names(levels)
    if sigma_n == 0:
        return {n: 0.0 for n in names}
    clean: Dict[str, List[np.ndarray]] = {n: [] for n in names}
    noisy: Dict[str, List[np.ndarray]] = {n: [] for n in names}
    for k, img in enumerate(corpus):
        x = as_array(img)
        n = np.random.default_rng([seed, k]).normal(0.0, sigma_n, x.shape)
        for (name, cb), (_, nb) in zip(ortho_forward(x, levels).items(), ortho_forward(x + n, levels).items()):
            if name in clean:
                clean[name].append(cb.ravel())
                noisy[name].append(nb.ravel())
    out = {}
    for name in names:
        c, y = np.concatenate(clean[name]), np.concatenate(noisy[name])
        res = minimize_scalar(lambda lam: float(np.sum((_soft(y, lam) - c) ** 2)),
                              bounds=(0.0, 6.0 * sigma_n), method="bounded",
                              options={"xatol": 1e-4 * sigma_n})
        out[name] = float(res.x)
    return out


__all__ = [
    "Profiles", "DenoiseConfig", "TauSelection", "BandState", "c_profile", "eps_profile",
    "noise_std_white", "noise_std_from_samples", "noise_std_from_covariance", "denoise_once",
    "denoise_pyramid", "svr_band", "select_tau", "kld_score", "signal_reference",
    "hard_threshold", "soft_threshold", "optimize_st_thresholds", "band_scale",
    "C_GLOBAL", "TAU_GRID", "NOISE_RANGE",
]
