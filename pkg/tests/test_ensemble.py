import numpy as np
import pytest
from scipy import special
from scipy.integrate import quad

from lambda_mem.bessel_basis import build_basis
from lambda_mem.ensemble import (Density, EnsembleParams, build_medium, coupling_matrix, diffraction_rates)


def test_params_validation():
    with pytest.raises(ValueError):
        EnsembleParams(0.0, 1.0)
    with pytest.raises(ValueError):
        EnsembleParams(1.0, -1.0)
    with pytest.raises(ValueError):
        EnsembleParams(1.0, 1.0, weighting="other")
    p = EnsembleParams(1.0, 1.0, detuning=2.0, density="uniform")
    assert p.density is Density.UNIFORM
    assert p.g == pytest.approx(1 / (0.5 + 2j))


def test_uniform_density_gives_identity():
    b = build_basis(0, 7, R=4.0)
    B = coupling_matrix(b, EnsembleParams(5.0, 1.0, density="uniform")).B
    np.testing.assert_array_equal(B, np.eye(7))


@pytest.mark.parametrize("weighting,expo", [("amplitude", 4.0), ("density", 2.0)])
def test_b11_against_adaptive_quadrature(weighting, expo):
    R = 8.0
    b = build_basis(0, 3, R)
    B = coupling_matrix(b, EnsembleParams(1.0, 1.0, weighting=weighting)).B
    lam = special.jn_zeros(0, 1)[0]
    N2 = 1.0 / (np.pi * R**2 * special.jv(1, lam) ** 2)
    ref, _ = quad(lambda r: N2 * special.jv(0, lam * r / R) ** 2 * np.exp(-r**2 / expo) * 2 * np.pi * r,
                  0, R, epsabs=1e-14, epsrel=1e-13, limit=200)
    assert B[0, 0] == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("m", [0, 1, 4])
def test_b_is_symmetric_psd_contraction(m):
    B = coupling_matrix(build_basis(m, 25, 6.0), EnsembleParams(1.0, 1.0)).B
    assert np.array_equal(B, B.T)
    ev = np.linalg.eigvalsh(B)
    assert ev.min() > -1e-12 and ev.max() <= 1 + 1e-12
    assert np.all(np.abs(B) <= 1)


def test_nesting_in_n_max():
    p = EnsembleParams(1.0, 1.0)
    B8 = coupling_matrix(build_basis(0, 8, 8.0), p).B
    B12 = coupling_matrix(build_basis(0, 12, 8.0), p).B
    np.testing.assert_allclose(B12[:8, :8], B8, atol=1e-12)


def test_diffraction_rates_and_medium():
    b = build_basis(0, 4, 4.0)
    np.testing.assert_allclose(diffraction_rates(b, 2.0), b.k_perp**2 / (8 * np.pi))
    med = build_medium(EnsembleParams(3.0, 2.0), 0, 4, 4.0)
    assert med.n == 4
    np.testing.assert_allclose(med.kappa, diffraction_rates(med.basis, 2.0))
    uni = med.with_params(density="uniform")
    np.testing.assert_array_equal(uni.B, np.eye(4))
    assert med.with_params(d0=7.0).B is med.B
