"""Anisotropic Laplacian kernels over intraband coefficient positions.

    K(p_i, p_j) = exp(-sqrt(d^T G(a)^T S^-1 G(a) d)),  d = p_i - p_j,
    S = diag(sigma1, sigma2)

Positions are ``(x, y) = (col, row)``.  ``G(a)`` rotates ``d`` so that the
first axis (width ``sigma1``) lies along direction ``(cos a, sin a)``, the
preferred direction of the subband.  ``S`` enters linearly, not squared.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

SIGMA1 = 4.8
SIGMA2 = 2.4


@dataclass(frozen=True)
class KernelSpec:
    sigma1: float = SIGMA1
    sigma2: float = SIGMA2
    alpha: float = 0.0
    isotropic: bool = False

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("kernel widths must be positive")
        if self.sigma1 < self.sigma2:
            raise ValueError("sigma1 (major width) must be >= sigma2")

    def for_band(self, alpha: float) -> "KernelSpec":
        return KernelSpec(self.sigma1, self.sigma2, float(alpha), False)

    def isotropic_version(self) -> "KernelSpec":
        s = 0.5 * (self.sigma1 + self.sigma2)
        return KernelSpec(s, s, 0.0, True)

    def to_dict(self):
        return asdict(self)


def _metric(spec: KernelSpec) -> np.ndarray:
    """``G^T S^-1 G`` as a 2x2 matrix."""
    c, s = np.cos(spec.alpha), np.sin(spec.alpha)
    G = np.array([[c, s], [-s, c]])
    return G.T @ np.diag([1.0 / spec.sigma1, 1.0 / spec.sigma2]) @ G


def kernel_value(p_i, p_j, spec: KernelSpec) -> float:
    d = np.asarray(p_i, dtype=np.float64) - np.asarray(p_j, dtype=np.float64)
    q = float(d @ _metric(spec) @ d)
    return float(np.exp(-np.sqrt(max(q, 0.0))))


def kernel_matrix(positions: Sequence[Tuple[float, float]], spec: KernelSpec) -> np.ndarray:
    """Gram matrix of :func:`kernel_value` over ``positions`` (unit diagonal)."""
    P = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if P.shape[0] == 0:
        raise ValueError("kernel_matrix: no positions")
    if len({tuple(p) for p in P.tolist()}) != P.shape[0]:
        raise ValueError("kernel_matrix: duplicate positions")
    D = P[:, None, :] - P[None, :, :]
    M = _metric(spec)
    q = np.einsum("ijk,kl,ijl->ij", D, M, D)
    K = np.exp(-np.sqrt(np.maximum(q, 0.0)))
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


def lattice_positions(shape: Tuple[int, int]) -> np.ndarray:
    """``(x, y)`` positions of a ``rows x cols`` patch in row-major order."""
    rows, cols = shape
    yy, xx = np.mgrid[0:rows, 0:cols]
    return np.column_stack([xx.ravel(), yy.ravel()]).astype(np.float64)


@lru_cache(maxsize=256)
def patch_kernel(shape: Tuple[int, int], spec: KernelSpec) -> np.ndarray:
    """Cached kernel matrix for a patch lattice; treat the result as read-only."""
    K = kernel_matrix(lattice_positions(shape), spec)
    K.setflags(write=False)
    return K


def kernel_map(spec: KernelSpec, radius: int = 2) -> np.ndarray:
    """Kernel evaluated on the ``(2r+1)^2`` neighbourhood, indexed ``[dy+r, dx+r]``."""
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    D = np.stack([dx.ravel(), dy.ravel()], axis=1).astype(np.float64)
    q = np.einsum("ik,kl,il->i", D, _metric(spec), D)
    return np.exp(-np.sqrt(np.maximum(q, 0.0))).reshape(dy.shape)


def fit_widths(mimap, constrain_ratio: bool = False, alpha: float | None = None) -> Tuple[float, float]:
    """Least-squares fit of the kernel shape to an MI map normalized to 1 at its center.

    ``mimap`` is an :class:`~svrdenoise.stats.MIMap` or a square array
    indexed ``[dy + r, dx + r]``.  The kernel is rotated by the band angle
    ``alpha`` (default: the map's own ``alpha``, else 0).  With ``constrain_ratio`` the fit is one-dimensional with
    ``sigma1 = 2 * sigma2``.  Returns ``(sigma1, sigma2)`` with
    ``sigma1 >= sigma2`` (the axes are swapped if the fit prefers it).
    """
    if alpha is None:
        alpha = getattr(mimap, "alpha", None) or 0.0
    vals = np.asarray(getattr(mimap, "values", mimap), dtype=np.float64)
    if vals.ndim != 2 or vals.shape[0] != vals.shape[1] or vals.shape[0] % 2 == 0:
        raise ValueError("MI map must be a square array of odd size")
    r = vals.shape[0] // 2
    center = vals[r, r]
    if center <= 0:
        raise ValueError("MI map has a non-positive center")
    target = vals / center
    off = np.ones_like(target, dtype=bool)
    off[r, r] = False
    if np.ptp(target[off]) < 1e-12 and abs(target[off][0] - 1.0) < 1e-12:
        raise ValueError("degenerate (flat) MI map")

    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    c, s = np.cos(alpha), np.sin(alpha)
    u1 = (c * dx + s * dy) ** 2
    u2 = (-s * dx + c * dy) ** 2

    def model(s1, s2):
        return np.exp(-np.sqrt(u1 / s1 + u2 / s2))

    if constrain_ratio:
        def resid(p):
            s2 = np.exp(p[0])
            return (model(2.0 * s2, s2) - target).ravel()
        sol = least_squares(resid, [np.log(SIGMA2)], xtol=1e-14, ftol=1e-14, gtol=1e-14)
        s2 = float(np.exp(sol.x[0]))
        return 2.0 * s2, s2

    def resid(p):
        return (model(np.exp(p[0]), np.exp(p[1])) - target).ravel()

    sol = least_squares(resid, [np.log(SIGMA1), np.log(SIGMA2)], xtol=1e-14, ftol=1e-14, gtol=1e-14)
    s1, s2 = (float(v) for v in np.exp(sol.x))
    return (s1, s2) if s1 >= s2 else (s2, s1)
