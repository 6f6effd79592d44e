"""Binned statistics: histograms, mutual information, KL divergence and the
corpus-level MI measurements (intraband MI maps, spatial / orientation /
scale MI curves for natural images against an i.i.d. Gaussian baseline).

All information quantities are plug-in estimates in bits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .imagio import as_array
from .xform import SteerableSpec, steerable_forward

# second-order KLD convention: (pixel, right-hand neighbour) pairs
SIGNAL_RANGE = (0.0, 255.0)
NOISE_RANGE = (-64.0, 64.0)
PAIR_BINS = 64
PAIR_SHIFT = (0, 1)
KLD_SMOOTH = 1e-8

# tail fraction clipped into the edge bins when a range is set from data
RANGE_QUANTILE = 0.999


@dataclass
class Hist1D:
    edges: np.ndarray
    prob: np.ndarray


@dataclass
class Hist2D:
    edges_x: np.ndarray
    edges_y: np.ndarray
    prob: np.ndarray
    count: int = 0

    def marginal_x(self) -> np.ndarray:
        return self.prob.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.prob.sum(axis=0)

    def transpose(self) -> "Hist2D":
        return Hist2D(self.edges_y, self.edges_x, self.prob.T.copy(), self.count)

    def coarsen(self, factor: int = 2) -> "Hist2D":
        n = self.prob.shape[0]
        if n % factor:
            raise ValueError("bin count not divisible by coarsening factor")
        p = self.prob.reshape(n // factor, factor, n // factor, factor).sum(axis=(1, 3))
        return Hist2D(self.edges_x[::factor], self.edges_y[::factor], p, self.count)


def _edges(n_bins, lo, hi):
    if not hi > lo:
        raise ValueError(f"degenerate histogram range ({lo}, {hi})")
    return np.linspace(lo, hi, n_bins + 1)


def _bin_index(v, n_bins, lo, hi):
    idx = np.floor((np.asarray(v, dtype=np.float64) - lo) * (n_bins / (hi - lo))).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def _as_range(rng):
    """Accept ``(lo, hi)`` or ``((xlo, xhi), (ylo, yhi))``."""
    rng = tuple(rng)
    if len(rng) == 2 and np.ndim(rng[0]) == 0:
        return (float(rng[0]), float(rng[1])), (float(rng[0]), float(rng[1]))
    (a, b), (c, d) = rng
    return (float(a), float(b)), (float(c), float(d))


def hist1d(values, n_bins: int, range: Tuple[float, float]) -> Hist1D:
    values = np.ravel(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        raise ValueError("hist1d: empty input")
    lo, hi = float(range[0]), float(range[1])
    edges = _edges(n_bins, lo, hi)
    counts = np.bincount(_bin_index(values, n_bins, lo, hi), minlength=n_bins)
    return Hist1D(edges, counts / counts.sum())


def hist2d_xy(x, y, n_bins: int, range) -> Hist2D:
    """Normalized joint histogram of paired samples ``x``, ``y``.

    Samples outside ``range`` are clipped into the edge bins.
    """
    x = np.ravel(np.asarray(x, dtype=np.float64))
    y = np.ravel(np.asarray(y, dtype=np.float64))
    if x.size == 0:
        raise ValueError("hist2d: empty input")
    if x.size != y.size:
        raise ValueError("hist2d: x and y differ in length")
    (xlo, xhi), (ylo, yhi) = _as_range(range)
    ex, ey = _edges(n_bins, xlo, xhi), _edges(n_bins, ylo, yhi)
    ix = _bin_index(x, n_bins, xlo, xhi)
    iy = _bin_index(y, n_bins, ylo, yhi)
    counts = np.bincount(ix * n_bins + iy, minlength=n_bins * n_bins).reshape(n_bins, n_bins)
    return Hist2D(ex, ey, counts / x.size, int(x.size))


def hist2d(pairs, n_bins: int, range) -> Hist2D:
    """Joint histogram of a sequence of ``(x, y)`` pairs (an ``(N, 2)`` array)."""
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.size == 0:
        raise ValueError("hist2d: empty input")
    pairs = pairs.reshape(-1, 2)
    return hist2d_xy(pairs[:, 0], pairs[:, 1], n_bins, range)


def merge_hists(hists: Sequence[Hist2D]) -> Hist2D:
    """Pool histograms with identical binning, weighting by sample count."""
    if not hists:
        raise ValueError("merge_hists: nothing to merge")
    first = hists[0]
    total = sum(h.count for h in hists)
    acc = np.zeros_like(first.prob)
    for h in hists:
        _check_same_binning(first, h)
        acc += h.prob * h.count
    return Hist2D(first.edges_x, first.edges_y, acc / total, total)


def shifted_pairs(grid, shift=(0, 1)):
    """Views ``(v[r, c], v[r + dy, c + dx])`` over all non-wrapping positions."""
    grid = np.asarray(grid)
    dy, dx = shift
    h, w = grid.shape
    if abs(dy) >= h or abs(dx) >= w:
        raise ValueError(f"shift {shift} too large for grid {grid.shape}")
    r0, r1 = max(0, -dy), h - max(0, dy)
    c0, c1 = max(0, -dx), w - max(0, dx)
    return grid[r0:r1, c0:c1], grid[r0 + dy:r1 + dy, c0 + dx:c1 + dx]


def pair_hist(grid, shift=PAIR_SHIFT, n_bins: int = PAIR_BINS, range=SIGNAL_RANGE) -> Hist2D:
    """Joint histogram of each value and its neighbour at ``shift = (dy, dx)``."""
    grid = as_array(grid)
    if grid.ndim != 2 or min(grid.shape) < 1:
        raise ValueError("pair_hist: degenerate grid")
    a, b = shifted_pairs(grid, shift)
    if a.size == 0:
        raise ValueError("pair_hist: no pairs for this shift")
    return hist2d_xy(a, b, n_bins, range)


def entropy(p) -> float:
    p = np.ravel(np.asarray(p, dtype=np.float64))
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _check_normalized(prob):
    s = float(np.sum(prob))
    if abs(s - 1.0) > 1e-9 or np.any(np.asarray(prob) < 0):
        raise ValueError(f"histogram is not normalized (sum = {s})")


def mutual_info(h: Hist2D) -> float:
    """Plug-in mutual information (bits); zero-probability cells contribute 0."""
    p = np.asarray(h.prob if isinstance(h, Hist2D) else h, dtype=np.float64)
    _check_normalized(p)
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    denom = (px * py)[nz]
    mi = float(np.sum(p[nz] * np.log2(p[nz] / denom)))
    return max(mi, 0.0)


def _probs_and_edges(h):
    if isinstance(h, Hist2D):
        return h.prob, (h.edges_x, h.edges_y)
    if isinstance(h, Hist1D):
        return h.prob, (h.edges,)
    arr = np.asarray(h, dtype=np.float64)
    return arr, None


def _check_same_binning(p, q):
    pp, pe = _probs_and_edges(p)
    qp, qe = _probs_and_edges(q)
    if np.shape(pp) != np.shape(qp):
        raise ValueError(f"binning mismatch: shapes {np.shape(pp)} vs {np.shape(qp)}")
    if pe is not None and qe is not None:
        if len(pe) != len(qe) or any(not np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(pe, qe)):
            raise ValueError("binning mismatch: bin edges differ")


def kld(p, q, smooth: float = KLD_SMOOTH) -> float:
    """Kullback-Leibler divergence D(p || q) in bits.

    ``smooth`` is added to every bin of both histograms before
    renormalizing.  With ``smooth == 0``, bins where ``p`` is zero contribute
    nothing and bins where only ``q`` is zero give ``inf``.
    """
    _check_same_binning(p, q)
    pp = np.asarray(_probs_and_edges(p)[0], dtype=np.float64)
    qq = np.asarray(_probs_and_edges(q)[0], dtype=np.float64)
    if smooth < 0:
        raise ValueError("smooth must be >= 0")
    pp = (pp + smooth) / np.sum(pp + smooth)
    qq = (qq + smooth) / np.sum(qq + smooth)
    nz = pp > 0
    if np.any(qq[nz] == 0):
        return float("inf")
    return max(float(np.sum(pp[nz] * np.log2(pp[nz] / qq[nz]))), 0.0)


# ---------------------------------------------------------------------------
# corpus MI experiments

@dataclass
class MIMap:
    values: np.ndarray          # [dy + 2, dx + 2]
    band: object = None
    alpha: float | None = None

    @property
    def center(self) -> float:
        return float(self.values[2, 2])

    def at(self, dy: int, dx: int) -> float:
        return float(self.values[dy + 2, dx + 2])


def symmetric_range(arrays: Iterable[np.ndarray], quantile: float = RANGE_QUANTILE):
    """``(-R, R)`` with ``R`` the ``quantile`` of pooled absolute values."""
    flat = np.concatenate([np.abs(np.ravel(a)) for a in arrays])
    r = float(np.quantile(flat, quantile)) if flat.size else 0.0
    if r <= 0:
        r = float(flat.max()) if flat.size and flat.max() > 0 else 1.0
    return (-r, r)


def _binned(bands, n_bins, rng):
    (lo, hi), _ = _as_range(rng)
    return [_bin_index(b, n_bins, lo, hi).astype(np.int64) for b in bands], (lo, hi)


def _pooled_mi_binned(index_grids, shift, n_bins, lo, hi):
    n = n_bins
    counts = np.zeros(n * n, dtype=np.int64)
    for g in index_grids:
        a, b = shifted_pairs(g, shift)
        counts += np.bincount((a * n + b).ravel(), minlength=n * n)
    total = counts.sum()
    if total == 0:
        raise ValueError("no sample pairs")
    e = _edges(n, lo, hi)
    return mutual_info(Hist2D(e, e, (counts / total).reshape(n, n), int(total)))


def spatial_mi(bands: Sequence[np.ndarray], shift, n_bins: int = 256, rng=None) -> float:
    """MI between coefficients and their neighbours at ``shift``, pooled over bands."""
    if rng is None:
        rng = symmetric_range(bands)
    grids, (lo, hi) = _binned(bands, n_bins, rng)
    return _pooled_mi_binned(grids, shift, n_bins, lo, hi)


def mi_map(corpus_bands: Sequence[np.ndarray], n_bins: int = 256, rng=None, band=None,
           alpha: float | None = None) -> MIMap:
    """5x5 map of MI between a coefficient and each intraband neighbour."""
    corpus_bands = [np.asarray(b) for b in corpus_bands]
    if not corpus_bands:
        raise ValueError("mi_map: no bands")
    if any(min(b.shape) < 5 for b in corpus_bands):
        raise ValueError("mi_map: bands must be at least 5x5")
    if rng is None:
        rng = symmetric_range(corpus_bands)
    grids, (lo, hi) = _binned(corpus_bands, n_bins, rng)
    vals = np.zeros((5, 5))
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            # MI is symmetric under (dy, dx) -> (-dy, -dx)
            if (dy, dx) < (0, 0) and (dy, dx) != (0, 0):
                continue
            vals[dy + 2, dx + 2] = _pooled_mi_binned(grids, (dy, dx), n_bins, lo, hi)
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            if (dy, dx) < (0, 0):
                vals[dy + 2, dx + 2] = vals[2 - dy, 2 - dx]
    return MIMap(vals, band, alpha)


def corpus_bands(corpus, spec: SteerableSpec | None = None, keys=None) -> Dict[object, List[np.ndarray]]:
    """Steerable coefficients of every image, grouped by band (float32)."""
    out: Dict[object, List[np.ndarray]] = {}
    for im in corpus:
        pyr = steerable_forward(im, spec)
        for key, band in pyr.items():
            if keys is None or key in keys:
                out.setdefault(key, []).append(band.astype(np.float32))
    return out


def iid_corpus(n: int, dims=(256, 256), seed: int = 0, std: float = 1.0) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [std * rng.standard_normal(dims) for _ in range(n)]


@dataclass
class MICurve:
    kind: str
    offsets: List[int]
    natural: List[float]
    iid: List[float]
    per_band_natural: Dict[object, List[float]]
    per_band_iid: Dict[object, List[float]]


def _curves_for(bands_by_key, kind, spec, n_bins, scale):
    K, S = spec.n_orients, spec.n_scales
    per_band: Dict[object, List[float]] = {}
    if kind == "spatial":
        offsets = [1, 2, 3, 4, 6, 8]
        for o in range(K):
            blist = bands_by_key[(scale, o)]
            rng = symmetric_range(blist)
            vals = []
            for d in offsets:
                # average horizontal and vertical neighbours
                vals.append(0.5 * (spatial_mi(blist, (0, d), n_bins, rng)
                                   + spatial_mi(blist, (d, 0), n_bins, rng)))
            per_band[(scale, o)] = vals
    elif kind == "orientation":
        offsets = list(range(1, K // 2 + 1))
        for o in range(K):
            a_list = bands_by_key[(scale, o)]
            ra = symmetric_range(a_list)
            vals = []
            for d in offsets:
                b_list = bands_by_key[(scale, (o + d) % K)]
                vals.append(_pooled_mi_two(a_list, b_list, n_bins, ra, symmetric_range(b_list)))
            per_band[(scale, o)] = vals
    elif kind == "scale":
        offsets = list(range(1, S - scale + 1))
        for o in range(K):
            a_list = bands_by_key[(scale, o)]
            ra = symmetric_range(a_list)
            vals = []
            for d in offsets:
                parents = [np.repeat(np.repeat(p, 2 ** d, axis=0), 2 ** d, axis=1)
                           for p in bands_by_key[(scale + d, o)]]
                vals.append(_pooled_mi_two(a_list, parents, n_bins, ra, symmetric_range(parents)))
            per_band[(scale, o)] = vals
    else:
        raise ValueError(f"unknown MI profile kind {kind!r}")
    mean = [float(np.mean([v[i] for v in per_band.values()])) for i in range(len(offsets))]
    return offsets, mean, per_band


def _pooled_mi_two(a_list, b_list, n_bins, ra, rb):
    n = n_bins
    counts = np.zeros(n * n, dtype=np.int64)
    for a, b in zip(a_list, b_list):
        ia = _bin_index(a, n, *ra).ravel()
        ib = _bin_index(b, n, *rb).ravel()
        counts += np.bincount(ia * n + ib, minlength=n * n)
    p = (counts / counts.sum()).reshape(n, n)
    return mutual_info(Hist2D(_edges(n, *ra), _edges(n, *rb), p, int(counts.sum())))


def mi_profiles(corpus, kind: str, spec: SteerableSpec | None = None, n_bins: int = 256,
                scale: int = 1, seed: int = 0, natural_bands=None, iid_bands=None) -> MICurve:
    """MI versus neighbour distance for a natural corpus and an i.i.d. baseline.

    ``kind`` is ``"spatial"`` (intraband shift in samples, horizontal and
    vertical averaged), ``"orientation"`` (orientation-index distance at the
    same position) or ``"scale"`` (distance in scales to the parent at the
    co-located position).  Curves average over the orientations of ``scale``.
    Precomputed band dictionaries may be passed to avoid recomputing pyramids.
    """
    if natural_bands is None:
        corpus = list(corpus)
        if len(corpus) < 10:
            raise ValueError("mi_profiles needs at least 10 images")
        natural_bands = corpus_bands(corpus, spec)
    if spec is None:
        shape = natural_bands[(1, 0)][0].shape
        spec = SteerableSpec(image_dims=shape)
    if iid_bands is None:
        n = len(natural_bands[(1, 0)])
        iid_bands = corpus_bands(iid_corpus(n, spec.image_dims, seed), spec)
    offsets, nat, per_nat = _curves_for(natural_bands, kind, spec, n_bins, scale)
    _, iid, per_iid = _curves_for(iid_bands, kind, spec, n_bins, scale)
    return MICurve(kind, offsets, nat, iid, per_nat, per_iid)


# ---------------------------------------------------------------------------
# CSV export

def _fmt(v) -> str:
    return f"{float(v):.6g}"


def write_hist_csv(h: Hist2D, path, exponent: float | None = None) -> None:
    """Edges rows (x then y), then one row of probabilities per x bin.

    ``exponent`` (e.g. 0.25) is applied to an exported copy only.
    """
    prob = h.prob if exponent is None else np.power(h.prob, exponent)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edges_x"] + [_fmt(e) for e in h.edges_x])
        w.writerow(["edges_y"] + [_fmt(e) for e in h.edges_y])
        for row in prob:
            w.writerow([""] + [_fmt(v) for v in row])


def read_hist_csv(path) -> Hist2D:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ex = np.array([float(v) for v in rows[0][1:]])
    ey = np.array([float(v) for v in rows[1][1:]])
    prob = np.array([[float(v) for v in r[1:]] for r in rows[2:]])
    prob = prob / prob.sum()
    return Hist2D(ex, ey, prob)


def write_mimap_csv(m: MIMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dy\\dx"] + [str(d) for d in range(-2, 3)])
        for i, dy in enumerate(range(-2, 3)):
            w.writerow([str(dy)] + [_fmt(v) for v in m.values[i]])


def write_curve_csv(c: MICurve, path, include_natural: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if include_natural:
            w.writerow(["offset", "MI_natural", "MI_iid"])
            for d, a, b in zip(c.offsets, c.natural, c.iid):
                w.writerow([d, _fmt(a), _fmt(b)])
        else:
            w.writerow(["offset", "MI_iid"])
            for d, b in zip(c.offsets, c.iid):
                w.writerow([d, _fmt(b)])
