"""Discrete Fourier-Bessel basis for the transverse light and spin-wave profiles.

Every field is expanded on the disc rho <= R (rho in units of the transverse
atomic width sigma) into modes

    u_mn(rho, phi) = N_mn J_m(lambda_mn rho / R) exp(i m phi),

which vanish at the cut-off radius and are orthonormal on the disc.  The
azimuthal factor is kept symbolic, so only radial profiles are returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import brentq

__all__ = [
    "BesselZeroError",
    "ModeIndex",
    "TransverseBasis",
    "bessel_zero",
    "bessel_zeros",
    "build_basis",
    "mode_function",
]

DEFAULT_RADIUS = 8.0


class BesselZeroError(RuntimeError):
    """Raised when the root polish for a Bessel zero does not converge."""


@dataclass(frozen=True)
class ModeIndex:
    """Azimuthal and radial quantum numbers of one transverse mode."""

    m: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"radial index must be >= 1, got {self.n}")


def _mcmahon(m: int, n: int) -> float:
    """Asymptotic estimate of the n-th positive zero of J_m."""
    mu = 4.0 * m * m
    beta = (n + 0.5 * m - 0.25) * np.pi
    e = 8.0 * beta
    return (beta - (mu - 1) / e - 4 * (mu - 1) * (7 * mu - 31) / (3 * e**3)
            - 32 * (mu - 1) * (83 * mu**2 - 982 * mu + 3779) / (15 * e**5))


def _polish(m: int, x0: float, tol: float, maxiter: int = 50) -> float:
    x = x0
    for _ in range(maxiter):
        # J_m'(x) = J_{m-1}(x) - (m/x) J_m(x)
        f = special.jv(m, x)
        df = special.jv(m - 1, x) - m / x * f
        step = f / df
        x -= step
        if abs(step) < tol * max(1.0, abs(x)):
            return x
    raise BesselZeroError(f"Newton polish did not converge near x={x0:.6g}")


def bessel_zeros(m: int, count: int, tol: float = 1e-15) -> np.ndarray:
    """First ``count`` positive zeros of J_m in increasing order.

    McMahon's expansion bounds the search interval; each zero is bracketed
    by a sign change on a grid of ~40 points per half-period, refined by
    Brent's method and finished with a Newton step.
    """
    m = int(m)
    if m < 0:
        raise ValueError("bessel_zeros expects m >= 0 (use |m|; J_-m = (-1)^m J_m)")
    if count < 1:
        raise ValueError("count must be >= 1")
    hi = _mcmahon(m, count) + 2 * np.pi
    lo = 1e-8 if m == 0 else float(m)
    grid = np.linspace(lo, hi, max(64, int(40 * (hi - lo) / np.pi)))
    vals = special.jv(m, grid)
    idx = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
    out = []
    for n, i in enumerate(idx[:count], start=1):
        try:
            x = brentq(lambda s: special.jv(m, s), grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15,
                       maxiter=200)
        except (RuntimeError, ValueError) as exc:
            raise BesselZeroError(f"bracketing failed for zero (m={m}, n={n})") from exc
        try:
            x = _polish(m, x, tol)
        except BesselZeroError as exc:
            raise BesselZeroError(f"Newton polish failed for zero (m={m}, n={n})") from exc
        if abs(special.jv(m, x)) > 1e-12:
            raise BesselZeroError(f"|J_{m}| = {abs(special.jv(m, x)):.2e} at zero (m={m}, n={n})")
        out.append(x)
    if len(out) < count:
        raise BesselZeroError(f"found only {len(out)} zeros of J_{m}, wanted (m={m}, n={count})")
    return np.asarray(out)


def bessel_zero(m: int, n: int) -> float:
    """n-th positive zero lambda_mn of J_m (n >= 1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(bessel_zeros(m, n)[-1])


@dataclass(frozen=True)
class TransverseBasis:
    """Fourier-Bessel modes of azimuthal order ``m`` on the disc rho <= R.

    Attributes
    ----------
    m : int
        Azimuthal quantum number (may be negative; radial profiles use |m|).
    n_max : int
        Number of radial modes.
    R : float
        Cut-off radius in units of sigma.
    zeros : ndarray
        lambda_mn, strictly increasing.
    k_perp : ndarray
        Transverse wavenumbers lambda_mn / R in units of 1/sigma.
    norms : ndarray
        N_mn = 1 / sqrt(pi R^2 J_{m+1}(lambda_mn)^2).
    """

    m: int
    n_max: int
    R: float
    zeros: np.ndarray = field(repr=False)
    k_perp: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)

    def radial(self, rho) -> np.ndarray:
        """All radial profiles at once, shape (n_max, len(rho)); zero outside R."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        vals = self.norms[:, None] * special.jv(abs(self.m), np.outer(self.k_perp, rho))
        vals[:, rho > self.R] = 0.0
        return vals

    def synthesize(self, coeffs, rho) -> np.ndarray:
        """Radial field sum_n c_n u_n(rho) from Bessel coefficients."""
        return np.asarray(coeffs) @ self.radial(rho)

    def project(self, profile, n_quad: int = 16) -> np.ndarray:
        """Bessel coefficients of a radial profile given as a callable."""
        rho, w = radial_quadrature(self, n_quad)
        return self.radial(rho) @ (2 * np.pi * rho * w * profile(rho))


def build_basis(m: int, n_max: int, R: float = DEFAULT_RADIUS) -> TransverseBasis:
    """Construct the first ``n_max`` radial modes of order ``m`` with cut-off ``R``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if R <= 0:
        raise ValueError("R must be positive")
    am = abs(int(m))
    lam = bessel_zeros(am, int(n_max))
    norms = 1.0 / np.sqrt(np.pi * R**2 * special.jv(am + 1, lam) ** 2)
    return TransverseBasis(int(m), int(n_max), float(R), lam, lam / R, norms)


def mode_function(basis: TransverseBasis, n: int, rho):
    """Radial part N_mn J_m(lambda_mn rho / R) of mode ``n`` (1-based); 0 for rho > R."""
    if not 1 <= n <= basis.n_max:
        raise IndexError(f"radial index {n} outside 1..{basis.n_max}")
    rho_arr = np.asarray(rho, dtype=float)
    val = basis.norms[n - 1] * special.jv(abs(basis.m), basis.k_perp[n - 1] * rho_arr)
    val = np.where(rho_arr > basis.R, 0.0, val)
    if np.ndim(rho) == 0:
        return float(val)
    return val


def radial_quadrature(basis: TransverseBasis, n_quad: int = 16, extra_panels: int = 40):
    """Gauss-Legendre panels on [0, R] fine enough for products of two modes.

    Panels are equally spaced with roughly four per half-oscillation of the
    highest mode, so integrands of the form u_n u_n' f(rho) are resolved.
    """
    x, w = np.polynomial.legendre.leggauss(n_quad)
    npan = 4 * basis.n_max + extra_panels
    edges = np.linspace(0.0, basis.R, npan + 1)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    rho = (half[:, None] * (x + 1) + a[:, None]).ravel()
    wr = (half[:, None] * w).ravel()
    return rho, wr
