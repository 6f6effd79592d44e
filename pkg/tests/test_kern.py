import numpy as np
import pytest

from svrdenoise.kern import (KernelSpec, fit_widths, kernel_map, kernel_matrix, kernel_value,
                             lattice_positions, patch_kernel)
from svrdenoise.stats import MIMap


def test_kernel_value_formula():
    spec = KernelSpec(4.8, 2.4, 0.0)
    # along the major axis: exp(-sqrt(d^2 / sigma1)), linear in sigma
    assert kernel_value((3, 0), (0, 0), spec) == pytest.approx(np.exp(-np.sqrt(9 / 4.8)), abs=1e-15)
    assert kernel_value((0, 3), (0, 0), spec) == pytest.approx(np.exp(-np.sqrt(9 / 2.4)), abs=1e-15)
    assert kernel_value((1, 2), (1, 2), spec) == 1.0


def test_rotation():
    a = np.pi / 2
    spec = KernelSpec(4.8, 2.4, a)
    # rotating by 90 degrees swaps the axes
    assert kernel_value((0, 2), (0, 0), spec) == pytest.approx(np.exp(-np.sqrt(4 / 4.8)))
    d = (np.cos(0.3) * 2, np.sin(0.3) * 2)
    assert kernel_value(d, (0, 0), KernelSpec(4.8, 2.4, 0.3)) == pytest.approx(np.exp(-np.sqrt(4 / 4.8)))


def test_matrix_properties():
    P = lattice_positions((6, 5))
    assert P.shape == (30, 2) and P[1].tolist() == [1.0, 0.0]
    K = kernel_matrix(P, KernelSpec(4.8, 2.4, 0.7))
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    assert np.all((K > 0) & (K <= 1))
    assert np.linalg.eigvalsh(K).min() > 0


def test_matrix_matches_pointwise(rng):
    P = rng.uniform(0, 10, (7, 2))
    spec = KernelSpec(3.0, 1.0, 1.1)
    K = kernel_matrix(P, spec)
    for i in range(7):
        for j in range(7):
            assert K[i, j] == pytest.approx(kernel_value(P[i], P[j], spec), abs=1e-14)


def test_matrix_errors():
    with pytest.raises(ValueError):
        kernel_matrix(np.zeros((0, 2)), KernelSpec())
    with pytest.raises(ValueError, match="duplicate"):
        kernel_matrix([(0, 0), (0, 0)], KernelSpec())
    with pytest.raises(ValueError):
        KernelSpec(1.0, 2.0)
    with pytest.raises(ValueError):
        KernelSpec(0.0, 0.0)


def test_patch_kernel_cached_readonly():
    a = patch_kernel((4, 4), KernelSpec())
    assert a is patch_kernel((4, 4), KernelSpec())
    with pytest.raises(ValueError):
        a[0, 0] = 0


def test_isotropic_version():
    iso = KernelSpec(4.8, 2.4).isotropic_version()
    assert iso.sigma1 == iso.sigma2 == pytest.approx(3.6)
    m = kernel_map(iso)
    assert m[2, 3] == pytest.approx(m[3, 2])


@pytest.mark.parametrize("alpha", [0.0, np.pi / 8, np.pi / 2, 3 * np.pi / 4])
def test_fit_recovers_synthetic(alpha):
    m = kernel_map(KernelSpec(4.8, 2.4, alpha))
    s1, s2 = fit_widths(MIMap(7.0 * m, alpha=alpha))
    assert s1 == pytest.approx(4.8, abs=1e-4)
    assert s2 == pytest.approx(2.4, abs=1e-4)


def test_fit_constrained_ratio():
    s1, s2 = fit_widths(kernel_map(KernelSpec(6.0, 3.0)), constrain_ratio=True)
    assert (s1, s2) == (pytest.approx(6.0, abs=1e-4), pytest.approx(3.0, abs=1e-4))


def test_fit_rejects_bad_maps():
    with pytest.raises(ValueError):
        fit_widths(np.ones((4, 4)))
    with pytest.raises(ValueError, match="flat"):
        fit_widths(np.ones((5, 5)))
    with pytest.raises(ValueError):
        fit_widths(np.zeros((5, 5)))
