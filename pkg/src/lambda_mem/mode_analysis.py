"""Post-processing of optimal modes.

Schmidt decomposition of (radial mode x time) amplitudes, time-reversal
overlaps, Gaussian-beam fits of the dominant transverse factor, the purity
bound on efficiency and the power-law fit of the inefficiency in F.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit, least_squares

from .bessel_basis import TransverseBasis
from .fields import LightMode, SpinWave

__all__ = [
    "GaussianFit",
    "ScalingFit",
    "SchmidtDecomposition",
    "fit_inefficiency_scaling",
    "gaussian_beam_profile",
    "gaussian_fit",
    "purity",
    "purity_bound",
    "schmidt_decompose",
    "time_reversal_overlap",
]


@dataclass
class SchmidtDecomposition:
    """mode(n, x) = sum_k sqrt(P_k) h_k(n) f_k(x), P descending and summing to 1."""

    weights: np.ndarray
    transverse_factors: np.ndarray = field(repr=False)   # (K, n), orthonormal rows
    temporal_factors: np.ndarray = field(repr=False)     # (K, N), orthonormal under the grid weights

    @property
    def purity(self) -> float:
        return float(self.weights[0])

    @property
    def dominant_transverse(self) -> np.ndarray:
        return self.transverse_factors[0]


def schmidt_decompose(mode: LightMode | SpinWave) -> SchmidtDecomposition:
    """SVD of the weighted amplitude matrix sqrt(w_x) mode(n, x)."""
    M = mode.weighted()
    if not np.any(M):
        raise ValueError("cannot decompose a zero mode")
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    P = s**2 / np.sum(s**2)
    return SchmidtDecomposition(P, U.T, Vh / np.sqrt(mode.weights)[None, :])


def purity(mode: LightMode | SpinWave) -> float:
    """Largest Schmidt weight."""
    return schmidt_decompose(mode).purity


def time_reversal_overlap(a_in: LightMode, a_out: LightMode) -> float:
    """|<a_out, conj(a_in(-t))>|^2 for normalized modes.

    In the frequency domain the time-reversed conjugate has the spectrum
    conj(a_in(nu)), so both modes must share the nu nodes; in the time
    domain a_out must live on the mirrored grid of a_in.
    """
    if a_in.domain != a_out.domain:
        raise ValueError("modes must be given in the same domain")
    if a_in.values.shape[0] != a_out.values.shape[0]:
        raise ValueError("modes have different numbers of transverse components")
    if a_in.domain == "freq":
        if not np.allclose(a_in.points, a_out.points):
            raise ValueError("frequency modes must share their nodes")
        rev = np.conj(a_in.values)
    else:
        if not (len(a_in.points) == len(a_out.points) and np.allclose(-a_in.points[::-1], a_out.points)):
            raise ValueError("a_out must be sampled on the mirrored time grid of a_in")
        rev = np.conj(a_in.values[:, ::-1])
    w = a_out.weights
    ov = np.sum(w * np.conj(a_out.values) * rev)
    n1 = np.sum(w * np.abs(a_out.values) ** 2)
    n2 = np.sum(w * np.abs(rev) ** 2)
    return float(abs(ov) ** 2 / (n1 * n2))


def purity_bound(eta: float, P: float, order: str = "exact") -> float:
    """Lower bound on the efficiency of the pure part of an optimal mode.

    ``order="exact"`` gives eta (1 - 2 (1 - P))^2; ``order="first"`` keeps
    the leading term in 1 - P, eta (1 - 4 (1 - P)).
    """
    if not 0.0 <= P <= 1.0:
        raise ValueError("purity must lie in [0, 1]")
    eps = 1.0 - P
    if order == "exact":
        return float(eta * (1.0 - 2.0 * eps) ** 2)
    if order == "first":
        return float(eta * (1.0 - 4.0 * eps))
    raise ValueError("order must be 'exact' or 'first'")


# ------------------------------------------------------------ Gaussian beams

@dataclass
class GaussianFit:
    """Gaussian beam matched to a transverse profile at the entrance plane.

    ``w0`` is in units of sigma; ``w0_scaled`` = w0 sqrt(F) is the waist in
    units of sqrt(lambda_0 L).  ``z_f`` is the focal-plane position (L units,
    measured from the entrance), ``z0`` the Rayleigh range, ``w`` and
    ``curvature`` the spot size and radius of curvature at the entrance.
    """

    w0: float
    z_f: float
    overlap: float
    w: float
    curvature: float
    z0: float
    F: float
    status: str = "ok"

    @property
    def w0_scaled(self) -> float:
        return float(self.w0 * np.sqrt(self.F))


def gaussian_beam_profile(rho, w0: float, z_f: float, F: float) -> np.ndarray:
    """Gaussian beam at the entrance plane for waist ``w0`` (sigma units) focused at ``z_f``.

    Free propagation is d_z A = (i / 2k) laplacian A with k = 2 pi F in these
    units, solved by exp(i k rho^2 / 2q) with q(z) = z - z_f - i pi F w0^2.
    """
    q0 = -z_f - 1j * np.pi * F * w0**2
    return np.exp(1j * np.pi * F * np.asarray(rho) ** 2 / q0)


def _beam_from_params(w: float, alpha: float, F: float):
    """(w0, z_f, z0, curvature) from the entrance-plane spot size and phase curvature alpha."""
    gamma = alpha + 1j / w**2              # field exp(i gamma rho^2) = exp(i pi F rho^2 / q0)
    q0 = np.pi * F / gamma
    z_f = -q0.real
    z0 = -q0.imag
    w0 = np.sqrt(z0 / (np.pi * F))
    curv = np.pi * F / alpha if alpha != 0 else np.inf
    return float(w0), float(z_f), float(z0), float(curv)


def gaussian_fit(h: np.ndarray, basis: TransverseBasis, F: float, n_rho: int = 800,
                 min_overlap: float = 0.95) -> GaussianFit:
    """Fit exp(-rho^2 / w^2 + i alpha rho^2) to the profile sum_n h_n u_n(rho).

    The complex amplitude is eliminated in closed form and (log w, alpha) are
    found by least squares on the disc rho <= R.  The waist and focal plane
    follow from the complex beam parameter.  Fits with overlap below
    ``min_overlap`` carry ``status="rejected"``.
    """
    if basis.m != 0:
        raise ValueError("the Gaussian-beam ansatz applies to m = 0 only")
    h = np.asarray(h, dtype=complex)
    x, wx = np.polynomial.legendre.leggauss(n_rho)
    rho = 0.5 * basis.R * (x + 1)
    wr = 0.5 * basis.R * wx * 2 * np.pi * rho
    target = basis.synthesize(h, rho)
    sw = np.sqrt(wr)
    tn = np.sqrt(np.sum(wr * np.abs(target) ** 2))
    if tn == 0:
        raise ValueError("cannot fit a zero profile")
    t = target * sw / tn

    def model(p):
        lw, alpha = p
        return np.exp(rho**2 * (1j * alpha - np.exp(-2 * lw))) * sw

    def resid(p):
        g = model(p)
        c = np.vdot(g, t) / np.vdot(g, g).real
        r = t - c * g
        return np.concatenate([r.real, r.imag])

    # second moment of |exp(-rho^2/w^2)|^2 in 2D: <rho^2> = w^2 / 2
    m2 = np.sum(wr * rho**2 * np.abs(target) ** 2) / tn**2
    ph = np.unwrap(np.angle(target))
    inner = np.abs(target) > 0.1 * np.max(np.abs(target))
    a0 = np.polyfit(rho[inner] ** 2, ph[inner], 1)[0] if np.count_nonzero(inner) > 3 else 0.0
    sol = least_squares(resid, [0.5 * np.log(2 * m2), a0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    lw, alpha = sol.x
    g = model(sol.x)
    overlap = float(abs(np.vdot(g, t)) ** 2 / np.vdot(g, g).real)
    w = float(np.exp(lw))
    w0, z_f, z0, curv = _beam_from_params(w, float(alpha), F)
    status = "ok" if overlap >= min_overlap else "rejected"
    return GaussianFit(w0, z_f, overlap, w, curv, z0, float(F), status)


# ------------------------------------------------------------ F scaling

@dataclass
class ScalingFit:
    """1 - eta = (1 - eta_1D)(1 + c F^-l) fitted over ``window``."""

    l: float
    c: float
    residual: float
    window: tuple
    free_amplitude: bool


def fit_inefficiency_scaling(F, eta, eta_1d: float, window: tuple = (0.5, 6.0),
                             free_amplitude: bool = True) -> ScalingFit:
    """Power-law exponent of the excess inefficiency over the 1D limit.

    With ``free_amplitude`` the prefactor c is fitted together with l;
    otherwise c = 1.  Points outside ``window`` are ignored; at least five
    must remain.
    """
    F = np.asarray(F, dtype=float)
    eta = np.asarray(eta, dtype=float)
    sel = (F >= window[0]) & (F <= window[1])
    if np.count_nonzero(sel) < 5:
        raise ValueError("need at least five Fresnel numbers inside the fit window")
    Fs, ys = F[sel], (1.0 - eta[sel]) / (1.0 - eta_1d) - 1.0
    try:
        if free_amplitude:
            # start from the log-log slope of the excess inefficiency
            pos = ys > 0
            if np.count_nonzero(pos) >= 2:
                slope, icpt = np.polyfit(np.log(Fs[pos]), np.log(ys[pos]), 1)
                p0 = [-slope, np.exp(icpt)]
            else:
                p0 = [1.0, 0.1]
            popt, _ = curve_fit(lambda f, l, c: c * f ** (-l), Fs, ys, p0=p0, maxfev=20000)
            l, c = popt
        else:
            popt, _ = curve_fit(lambda f, l: f ** (-l), Fs, ys, p0=[1.0], maxfev=20000)
            l, c = popt[0], 1.0
    except RuntimeError as exc:
        raise RuntimeError(f"inefficiency fit did not converge: {exc}") from exc
    model = (1.0 - eta_1d) * (1.0 + c * Fs ** (-l))
    res = float(np.sqrt(np.mean((model - (1.0 - eta[sel])) ** 2)))
    return ScalingFit(float(l), float(c), res, tuple(window), free_amplitude)
