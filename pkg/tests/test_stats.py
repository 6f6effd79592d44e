import numpy as np
import pytest
from scipy.stats import entropy as sp_entropy

from svrdenoise.stats import (Hist2D, MIMap, entropy, hist1d, hist2d, hist2d_xy, iid_corpus, kld,
                              merge_hists, mi_map, mutual_info, pair_hist, read_hist_csv,
                              shifted_pairs, spatial_mi, symmetric_range, write_hist_csv,
                              write_mimap_csv)


def test_hist2d_matches_numpy(rng):
    x, y = rng.uniform(0, 10, (2, 5000))
    h = hist2d_xy(x, y, 16, (0, 10))
    ref, _, _ = np.histogram2d(x, y, bins=16, range=[[0, 10], [0, 10]])
    np.testing.assert_allclose(h.prob, ref / ref.sum(), atol=1e-15)
    assert h.count == 5000
    assert h.prob.sum() == pytest.approx(1.0)


def test_hist_clips_out_of_range():
    h = hist2d([(-5, 0), (100, 9.99)], 10, (0, 10))
    assert h.prob[0, 0] == 0.5 and h.prob[9, 9] == 0.5
    h1 = hist1d([-1.0, 11.0], 2, (0, 10))
    assert h1.prob.tolist() == [0.5, 0.5]


def test_hist_errors():
    with pytest.raises(ValueError):
        hist2d_xy([], [], 4, (0, 1))
    with pytest.raises(ValueError):
        hist2d_xy([1, 2], [1], 4, (0, 1))
    with pytest.raises(ValueError, match="degenerate"):
        hist2d_xy([1], [1], 4, (1, 1))


def test_pair_hist_right_neighbour():
    g = np.array([[0.0, 255.0], [0.0, 255.0]])
    h = pair_hist(g, n_bins=2)
    assert h.count == 2
    assert h.prob[0, 1] == 1.0
    with pytest.raises(ValueError):
        pair_hist(np.zeros((3, 1)))


def test_shifted_pairs_alignment():
    g = np.arange(20).reshape(4, 5)
    a, b = shifted_pairs(g, (1, -2))
    assert np.all(b - a == 5 - 2)
    assert a.shape == (3, 3)
    with pytest.raises(ValueError):
        shifted_pairs(g, (4, 0))


def test_entropy_and_mi_oracles():
    assert entropy([0.5, 0.5]) == pytest.approx(1.0)
    # independent uniform: MI 0
    assert mutual_info(np.full((4, 4), 1 / 16)) == 0.0
    # identical variables: MI = H(X)
    assert mutual_info(np.eye(4) / 4) == pytest.approx(2.0)
    p = np.array([[0.3, 0.1], [0.2, 0.4]])
    px, py = p.sum(1), p.sum(0)
    ref = sp_entropy(px, base=2) + sp_entropy(py, base=2) - sp_entropy(p.ravel(), base=2)
    assert mutual_info(p) == pytest.approx(ref, abs=1e-14)
    with pytest.raises(ValueError, match="normalized"):
        mutual_info(np.ones((2, 2)))


def test_mi_gaussian_analytic(rng):
    rho = 0.8
    x = rng.standard_normal(400000)
    y = rho * x + np.sqrt(1 - rho ** 2) * rng.standard_normal(400000)
    est = mutual_info(hist2d_xy(x, y, 64, (-5, 5)))
    assert est == pytest.approx(-0.5 * np.log2(1 - rho ** 2), rel=0.05)


def test_kld_matches_scipy(rng):
    p = rng.dirichlet(np.ones(25)).reshape(5, 5)
    q = rng.dirichlet(np.ones(25)).reshape(5, 5)
    assert kld(p, q, smooth=0) == pytest.approx(sp_entropy(p.ravel(), q.ravel(), base=2), abs=1e-12)
    assert kld(p, p) == 0.0
    assert kld(p, q) > 0


def test_kld_zero_bins():
    p = np.array([0.5, 0.5, 0.0])
    q = np.array([0.5, 0.0, 0.5])
    assert kld(p, q, smooth=0) == float("inf")
    assert np.isfinite(kld(p, q))
    assert kld(np.array([1.0, 0.0]), np.array([0.5, 0.5]), smooth=0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        kld(p, q, smooth=-1)


def test_kld_binning_mismatch(rng):
    a = pair_hist(rng.uniform(0, 255, (8, 8)))
    b = pair_hist(rng.uniform(0, 255, (8, 8)), range=(0, 100))
    with pytest.raises(ValueError, match="binning mismatch"):
        kld(a, b)
    with pytest.raises(ValueError, match="binning mismatch"):
        kld(np.ones(3) / 3, np.ones(4) / 4)


def test_merge_weights_by_count():
    a = hist2d([(0, 0)], 2, (0, 2))
    b = hist2d([(1.5, 1.5)] * 3, 2, (0, 2))
    m = merge_hists([a, b])
    assert m.count == 4 and m.prob[0, 0] == 0.25 and m.prob[1, 1] == 0.75
    assert isinstance(a.transpose(), Hist2D)


def test_symmetric_range():
    lo, hi = symmetric_range([np.arange(-1000, 1001, dtype=float)], 0.5)
    assert lo == -hi and hi == pytest.approx(500, abs=1)
    assert symmetric_range([np.zeros(3)]) == (-1.0, 1.0)


def test_mi_map_iid_is_flat_and_symmetric():
    bands = iid_corpus(10, (32, 32), seed=3)
    m = mi_map(bands, n_bins=16)
    assert m.values.shape == (5, 5)
    np.testing.assert_array_equal(m.values, m.values[::-1, ::-1])
    off = np.delete(m.values.ravel(), 12)
    # plug-in bias only: tiny compared with the centre (the entropy)
    assert off.max() < 0.05 * m.center
    assert m.center == pytest.approx(spatial_mi(bands, (0, 0), 16), rel=1e-12)


def test_mi_map_detects_correlation(rng):
    # rows smoothed horizontally: strong MI along dx, none along dy
    bands = []
    for _ in range(5):
        w = rng.standard_normal((40, 44))
        bands.append(w[:, :-4] + w[:, 1:-3] + w[:, 2:-2] + w[:, 3:-1] + w[:, 4:])
    m = mi_map(bands, n_bins=32)
    assert isinstance(m, MIMap)
    assert m.at(0, 1) > 5 * m.at(1, 0)
    with pytest.raises(ValueError):
        mi_map([np.zeros((4, 4))])


def test_csv_roundtrip(tmp_path, rng):
    h = pair_hist(rng.uniform(0, 255, (16, 16)), n_bins=8)
    write_hist_csv(h, tmp_path / "h.csv")
    back = read_hist_csv(tmp_path / "h.csv")
    np.testing.assert_allclose(back.prob, h.prob, rtol=1e-5)
    np.testing.assert_allclose(back.edges_x, h.edges_x)
    write_hist_csv(h, tmp_path / "h4.csv", exponent=0.25)
    write_mimap_csv(MIMap(np.arange(25.0).reshape(5, 5)), tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "dy\\dx,-2,-1,0,1,2" and lines[1].startswith("-2,0,1,2")
