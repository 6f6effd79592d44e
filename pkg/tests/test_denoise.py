import numpy as np
import pytest

from svrdenoise.calibration import Calibration, calibrate
from svrdenoise.denoise import (BandState, DenoiseConfig, Profiles, band_scale, c_profile,
                                denoise_once, eps_profile, hard_threshold, kld_score,
                                noise_std_from_covariance, noise_std_from_samples, noise_std_white,
                                optimize_st_thresholds, select_tau, signal_reference,
                                soft_threshold, svr_band)
from svrdenoise.kern import KernelSpec
from svrdenoise.metrics import ssim
from svrdenoise.noisegen import Gaussian, JpegLike, apply_noise
from svrdenoise.xform import HIGHPASS, LOWPASS, SteerableSpec, analytic_gains, ortho_forward

SPEC64 = SteerableSpec(3, 4, (64, 64))


@pytest.fixture(scope="module")
def crops(small_corpus):
    return [im.data[96:160, 96:160] for im in small_corpus]


@pytest.fixture(scope="module")
def cal64(crops):
    return calibrate(crops, Gaussian(400.0, seed=1), transform=SPEC64, st_images=10)


def test_band_scale():
    assert band_scale(HIGHPASS) == 0
    assert band_scale((3, 1)) == 3
    with pytest.raises(ValueError):
        band_scale(LOWPASS)


def test_eps_profile():
    eps = eps_profile({"a": 0.5, (1, 0): 2.0}, 20.0, 1.5)
    assert eps == {"a": 15.0, (1, 0): 60.0}
    with pytest.raises(ValueError):
        eps_profile({}, -1.0, 1.0)


def test_profiles_roundtrip_and_validation():
    p = Profiles({0: 1.0, 1: 2.0}, {HIGHPASS: 3.0, (1, 0): 4.0}, 10.0, 2.0, 5.0)
    q = Profiles.from_dict(p.to_dict())
    assert q == p
    with pytest.raises(ValueError):
        Profiles({0: 0.0}, {})
    with pytest.raises(ValueError):
        Profiles({0: 1.0}, {HIGHPASS: -1.0})


def test_c_profile(crops):
    k = c_profile(crops, SPEC64)
    assert sorted(k) == [0, 1, 2, 3]
    assert all(v > 0 for v in k.values())
    # natural images: coarser scales carry more energy
    assert k[3] > k[1]
    with pytest.raises(ValueError):
        c_profile(crops[:9], SPEC64)
    with pytest.raises(ValueError, match="degenerate"):
        c_profile([np.full((64, 64), 7.0)] * 10, SPEC64)


def test_noise_std_white_vs_covariance():
    spec = SteerableSpec(2, 4, (16, 16))
    ref = analytic_gains(spec)
    cov = noise_std_from_covariance(9.0 * np.eye(256), spec)
    for k in ref:
        assert cov[k] == pytest.approx(3.0 * ref[k], rel=1e-9)
    white = noise_std_white(spec, 3.0, n_mc=2000)
    for k in ref:
        assert white[k] == pytest.approx(3.0 * ref[k], rel=0.05)
    with pytest.raises(ValueError):
        noise_std_from_covariance(np.eye(3), spec)


def test_noise_std_correlated_noise():
    # row-correlated noise: the sample route agrees with the covariance route
    spec = SteerableSpec(2, 4, (16, 16))
    rng = np.random.default_rng(2)
    A = np.zeros((256, 256))
    for i in range(256):
        A[i, i] = 1.0
        A[i, (i // 16) * 16 + (i % 16 + 1) % 16] = 0.8
    cov = A @ A.T
    exact = noise_std_from_covariance(cov, spec)
    samples = [(A @ rng.standard_normal(256)).reshape(16, 16) for _ in range(3000)]
    emp = noise_std_from_samples(samples, spec)
    for k in exact:
        assert emp[k] == pytest.approx(exact[k], rel=0.05)


def test_config_validation():
    p = Profiles({0: 1.0}, {})
    with pytest.raises(ValueError):
        DenoiseConfig(p, tau_grid=(2.0, 1.0))
    with pytest.raises(ValueError):
        DenoiseConfig(p, tau_grid=())
    cfg = DenoiseConfig(p, transform=SPEC64)
    assert cfg.band_kernel(HIGHPASS).isotropic
    assert cfg.band_kernel((1, 2)).alpha == pytest.approx(np.pi / 2)


def _single_band_cfg(eps_std, c=1e6):
    prof = Profiles({1: 1.0}, {(1, 0): eps_std}, c_global=c)
    return DenoiseConfig(prof, KernelSpec(), SPEC64, tol=1e-8)


def test_svr_band_limits(rng):
    band = rng.normal(0, 10, (40, 40))
    # no tube and no penalty cap: exact interpolation
    np.testing.assert_allclose(svr_band(band, (1, 0), _single_band_cfg(0.0), 1.0), band, atol=1e-6)
    # tube wider than every coefficient: all zero
    assert np.all(svr_band(band, (1, 0), _single_band_cfg(1e3), 1.0) == 0)


def test_svr_band_warm_start(rng):
    band = rng.normal(0, 10, (32, 32))
    cfg = _single_band_cfg(5.0)
    st = BandState()
    stats = {}
    a = svr_band(band, (1, 0), cfg, 1.0, st, stats)
    assert stats["problems"] == 4 and stats["unconverged"] == 0
    b = svr_band(band, (1, 0), cfg, 1.0, st)
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_denoise_improves(crops, cal64):
    img = crops[0]
    noisy, _ = apply_noise(img, Gaussian(400.0, seed=9))
    est, nest = denoise_once(noisy, cal64.config(), 1.5)
    assert ssim(est, img) > ssim(noisy, img) + 0.1
    assert np.allclose(est.data + nest.data, noisy.data)
    assert est.data.min() >= 0 and est.data.max() <= 255
    with pytest.raises(ValueError):
        denoise_once(noisy, cal64.config(), -1.0)


def test_select_tau(crops, cal64):
    noisy, _ = apply_noise(crops[1], Gaussian(400.0, seed=3))
    cfg = cal64.config(tau_grid=(1.0, 2.0, 3.0))
    sel = select_tau(noisy, cal64.signal_ref, cal64.noise_ref, cfg)
    assert [s[0] for s in sel.scores] == [1.0, 2.0, 3.0]
    best = min(sel.score(t) for t in (1.0, 2.0, 3.0))
    assert sel.score(sel.tau) == best
    tau, est = sel
    assert est is sel.estimate
    cold = select_tau(noisy, cal64.signal_ref, cal64.noise_ref, cfg, warm_start=False)
    assert cold.tau == sel.tau
    assert np.max(np.abs(cold.estimate.data - sel.estimate.data)) < 0.5


def test_kld_score_zero_for_reference(crops):
    ref = signal_reference(crops[:1])
    noise = np.random.default_rng(0).normal(0, 20, (64, 64))
    from svrdenoise.stats import pair_hist
    nref = pair_hist(noise, n_bins=64, range=(-64, 64))
    ks, kn = kld_score(crops[0], noise, ref, nref)
    assert ks == 0.0 and kn == 0.0


def test_hard_threshold():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 255, (64, 64))
    assert np.allclose(hard_threshold(x, 0.0).data, x)
    out = hard_threshold(x, 20.0).data
    kept = ortho_forward(out).details[0][0]
    # surviving coefficients exceed the threshold (up to clipping effects)
    nz = np.abs(kept) > 1e-6
    assert nz.mean() < 1.0
    with pytest.raises(ValueError):
        hard_threshold(x, -1.0)


def test_soft_threshold():
    rng = np.random.default_rng(0)
    x = rng.uniform(50, 200, (64, 64))
    assert np.allclose(soft_threshold(x, [0.0] * 12).data, x)
    out = soft_threshold(x, [1e6] * 12).data
    # all detail removed: only the approximation survives
    op = ortho_forward(out)
    assert max(np.abs(b).max() for t in op.details for b in t) < 1e-6
    with pytest.raises(ValueError):
        soft_threshold(x, {"L1H": 1.0})
    with pytest.raises(ValueError):
        soft_threshold(x, [-1.0] * 12)


def test_st_thresholds_are_optimal(crops):
    th = optimize_st_thresholds(crops[:10], 20.0, seed=4)
    assert set(th) == {f"L{lev}{o}" for lev in range(1, 5) for o in "HVD"}
    # brute-force oracle on the finest horizontal band
    from svrdenoise.denoise import _soft
    c, y = [], []
    for k, img in enumerate(crops[:10]):
        n = np.random.default_rng([4, k]).normal(0, 20, img.shape)
        c.append(ortho_forward(img).details[0][0].ravel())
        y.append(ortho_forward(img + n).details[0][0].ravel())
    c, y = np.concatenate(c), np.concatenate(y)
    grid = np.linspace(0, 120, 2401)
    errs = [np.sum((_soft(y, g) - c) ** 2) for g in grid]
    brute = grid[int(np.argmin(errs))]
    assert th["L1H"] == pytest.approx(brute, abs=0.1)
    assert optimize_st_thresholds(crops[:10], 0.0)["L1H"] == 0.0


def test_calibration_roundtrip(tmp_path, cal64):
    p = tmp_path / "c.json"
    cal64.save(p)
    back = Calibration.load(p)
    assert back.transform == cal64.transform
    assert back.profiles.k_scale.keys() == cal64.profiles.k_scale.keys()
    assert back.sigma_equiv == pytest.approx(cal64.sigma_equiv, rel=1e-5)
    np.testing.assert_allclose(back.signal_ref.edges_x, cal64.signal_ref.edges_x)
    back.save(tmp_path / "d.json")
    assert (tmp_path / "d.json").read_text() == p.read_text()
    with pytest.raises(FileNotFoundError):
        Calibration.load(tmp_path / "missing.json")


def test_calibrate_gaussian_and_structured(crops, cal64):
    assert cal64.profiles.sigma_n == 20.0
    assert cal64.sigma_equiv == pytest.approx(20.0, rel=0.05)
    centers = 0.5 * (cal64.noise_ref.edges_x[:-1] + cal64.noise_ref.edges_x[1:])
    px = cal64.noise_ref.marginal_x()
    assert float(np.sum(px * centers ** 2)) == pytest.approx(400.0, rel=0.1)
    jp = calibrate(crops, JpegLike(8.0), transform=SPEC64, st_images=10)
    assert jp.profiles.noise_std[(1, 0)] > 0
    assert jp.profiles.noise_std[(3, 0)] != pytest.approx(
        jp.sigma_equiv * jp.gains[(3, 0)], rel=0.01)


def test_calibrate_small_corpus(crops, caplog):
    with pytest.raises(ValueError):
        calibrate(crops[:5], Gaussian(100.0), transform=SPEC64)
    cal = calibrate(crops[:5], Gaussian(100.0), transform=SPEC64, strict=False)
    assert cal.n_images == 10
    assert "only 5 images" in caplog.text
