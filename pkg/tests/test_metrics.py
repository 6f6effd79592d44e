import numpy as np
import pytest
from skimage.metrics import structural_similarity

from svrdenoise.metrics import (QualityRow, pair_correlation, quality_row, read_quality_csv,
                                residual_report, rmse, ssim, ssim_map, write_quality_csv)


def _sk(a, b):
    return structural_similarity(a, b, data_range=255, gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False)


def test_ssim_matches_skimage(test_images, rng):
    x = test_images["lena"].data
    y = np.clip(x + rng.normal(0, 20, x.shape), 0, 255)
    assert ssim(y, x) == pytest.approx(_sk(y, x), abs=1e-6)
    z = rng.uniform(0, 255, (40, 50))
    w = rng.uniform(0, 255, (40, 50))
    assert ssim(z, w) == pytest.approx(_sk(z, w), abs=1e-6)


def test_ssim_properties(rng):
    x = rng.uniform(0, 255, (32, 32))
    y = rng.uniform(0, 255, (32, 32))
    assert ssim(x, x) == pytest.approx(1.0)
    assert ssim(x, y) == pytest.approx(ssim(y, x))
    assert ssim_map(x, y).shape == (22, 22)
    with pytest.raises(ValueError):
        ssim(np.zeros((5, 5)), np.zeros((5, 5)))
    with pytest.raises(ValueError):
        ssim(np.zeros((20, 20)), np.zeros((20, 21)))


def test_rmse():
    assert rmse(np.zeros((2, 2)), np.full((2, 2), 3.0)) == 3.0


def test_pair_correlation(rng):
    assert abs(pair_correlation(rng.standard_normal((200, 200)))) < 0.02
    w = rng.standard_normal((200, 201))
    assert pair_correlation(w[:, 1:] + w[:, :-1]) == pytest.approx(0.5, abs=0.03)
    assert pair_correlation(np.ones((4, 4))) == 0.0


def test_residual_report(rng):
    r = rng.normal(0, 10, (64, 64))
    rep = residual_report(r)
    assert rep.variance == pytest.approx(r.var())
    assert rep.hist.prob.shape == (64, 64) and rep.hist.prob.sum() == pytest.approx(1.0)


def test_quality_csv_roundtrip(tmp_path, rng):
    x = rng.uniform(0, 255, (16, 16))
    rows = [quality_row("lena", "gaussian400", "SVR", x + 1, x, 1.5),
            QualityRow("lena", "gaussian400", "noisy", 0.123456789, 12.0, None)]
    p = tmp_path / "q.csv"
    write_quality_csv(rows[:1], p)
    write_quality_csv(rows[1:], p, append=True)
    text = p.read_text().splitlines()
    assert text[0] == "image,noise,method,ssim,rmse,tau_star"
    assert text[2] == "lena,gaussian400,noisy,0.123457,12,"
    back = read_quality_csv(p)
    assert back[0].tau_star == 1.5 and back[0].rmse == 1.0 and back[1].tau_star is None
