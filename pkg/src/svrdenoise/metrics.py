"""Image quality metrics (RMSE, SSIM) and residual statistics."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List

import numpy as np
from scipy.ndimage import correlate1d

from .imagio import as_array
from .stats import NOISE_RANGE, PAIR_BINS, PAIR_SHIFT, Hist2D, pair_hist, shifted_pairs

# SSIM constants of the reference definition
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5


def _pair(a, b):
    x, y = as_array(a), as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def rmse(a, b) -> float:
    x, y = _pair(a, b)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def _gauss_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def _filt(x, g):
    # separable 'valid' filtering
    r = (g.size - 1) // 2
    y = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return y[r:-r, r:-r] if r else y


def ssim_map(a, b, k1: float = SSIM_K1, k2: float = SSIM_K2, data_range: float = SSIM_L,
             win: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x, y = _pair(a, b)
    if min(x.shape) < win:
        raise ValueError(f"SSIM needs images of at least {win}x{win}, got {x.shape}")
    g = _gauss_window(win, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    mx, my = _filt(x, g), _filt(y, g)
    sxx = _filt(x * x, g) - mx * mx
    syy = _filt(y * y, g) - my * my
    sxy = _filt(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b, **kw) -> float:
    """Mean SSIM over the valid region of an 11x11 Gaussian window (std 1.5)."""
    return float(np.mean(ssim_map(a, b, **kw)))


def pair_correlation(x, shift=PAIR_SHIFT) -> float:
    a, b = shifted_pairs(as_array(x), shift)
    a, b = a.ravel() - a.mean(), b.ravel() - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / den) if den > 0 else 0.0


@dataclass
class ResidualReport:
    hist: Hist2D
    mean: float
    variance: float
    pair_corr: float


def residual_report(residual, shift=PAIR_SHIFT, n_bins: int = PAIR_BINS,
                    range=NOISE_RANGE) -> ResidualReport:
    """Pair histogram and summary moments of a spatial residual.

    The histogram holds plain probabilities; the 0.25 display exponent is
    applied only by :func:`svrdenoise.stats.write_hist_csv`.
    """
    x = as_array(residual)
    return ResidualReport(pair_hist(x, shift, n_bins, range), float(x.mean()),
                          float(x.var()), pair_correlation(x, shift))


@dataclass
class QualityRow:
    image: str
    noise: str
    method: str
    ssim: float
    rmse: float
    tau_star: float | None = None


QUALITY_FIELDS = ["image", "noise", "method", "ssim", "rmse", "tau_star"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def quality_row(image: str, noise: str, method: str, estimate, clean,
                tau_star: float | None = None) -> QualityRow:
    return QualityRow(image, noise, method, ssim(estimate, clean), rmse(estimate, clean), tau_star)


def write_quality_csv(rows: Iterable[QualityRow], path, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(QUALITY_FIELDS)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in QUALITY_FIELDS])


def read_quality_csv(path) -> List[QualityRow]:
    out = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            out.append(QualityRow(d["image"], d["noise"], d["method"], float(d["ssim"]),
                                  float(d["rmse"]), float(d["tau_star"]) if d["tau_star"] else None))
    return out


__all__ = [
    "rmse", "ssim", "ssim_map", "pair_correlation", "residual_report", "ResidualReport",
    "QualityRow", "quality_row", "write_quality_csv", "read_quality_csv", "QUALITY_FIELDS",
]
