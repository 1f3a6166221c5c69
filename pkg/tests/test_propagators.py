import numpy as np
import pytest
from scipy.linalg import expm

from lambda_mem.grids import freq_grid, z_grid
from lambda_mem.propagators import (PropagatorError, build_freq_propagators, build_u_propagators, propagator_M,
                                    retrieval_operator)


def test_freq_kernel_matches_expm(medium_small):
    fp = build_freq_propagators(0.7j, medium_small)
    z = np.array([0.0, 0.3, 0.9, 1.0])
    K = fp.K(z)
    for k, zz in enumerate(z):
        np.testing.assert_allclose(K[k], expm(fp.E * (1 - zz)) @ fp.H, atol=1e-12)
    np.testing.assert_allclose(fp.K(1.0), fp.H, atol=1e-14)


def test_zero_frequency_is_pure_diffraction(medium_small):
    fp = build_freq_propagators(0.0, medium_small)
    np.testing.assert_allclose(fp.E, -1j * np.diag(medium_small.kappa), atol=1e-15)


def test_freq_pole_detected(medium_small):
    # denominator 4 omega (1/2) + 1 vanishes at omega = -1/2
    with pytest.raises(PropagatorError):
        build_freq_propagators(-0.5, medium_small)


def test_u_propagator_at_zero_time_and_negative_time(medium_small):
    up = build_u_propagators(0.4 - 1j, medium_small)
    np.testing.assert_allclose(propagator_M(up, 0.0), up.Q, atol=1e-13)
    M = propagator_M(up, np.array([0.5, 2.0]))
    np.testing.assert_allclose(M[1], up.Q @ expm(2.0 * up.N), atol=1e-12)
    with pytest.raises(ValueError):
        propagator_M(up, -1.0)


@pytest.mark.parametrize("u", [0.0, 3.0, -7.5])
def test_spin_wave_decay_is_passive(medium_small, u):
    # on the real u axis N + N^dagger is negative semidefinite: no gain
    N = build_u_propagators(u, medium_small).N
    assert np.linalg.eigvalsh(N + N.conj().T).max() <= 1e-12


def test_retrieval_operator_matches_pointwise_kernel(medium_small):
    zg, fg = z_grid(8), freq_grid(6)
    K = retrieval_operator(medium_small, zg, fg)
    n = medium_small.n
    Kr = K.reshape(len(fg), n, len(zg), n)
    for i in (0, 3):
        fp = build_freq_propagators(1j * fg.points[i], medium_small)
        ref = fp.K(zg.points) * np.sqrt(fg.weights[i] / (2 * np.pi))
        ref = ref * np.sqrt(zg.weights)[:, None, None]
        np.testing.assert_allclose(Kr[i], ref.transpose(1, 0, 2), atol=1e-12)
