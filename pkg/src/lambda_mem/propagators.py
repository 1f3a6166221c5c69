"""Adiabatic transfer matrices in the two Laplace pictures.

u-picture (Laplace in z, u on the real line after u -> iu):

    T(u)  = iu + i kappa + (d0/4) g B^2
    Q(u)  = -(sqrt(d0) Omega / 4) g T^-1 B
    N(u)  = -(|Omega|^2/4) g + (d0 |Omega|^2/16) g^2 B T^-1 B
    M(t,u) = Q(u) exp(N(u) t)

with g = 1/(1/2 + i Delta) and kappa = k_perp^2 / (4 pi F).  A spin wave
S(u) released at t = 0 produces a(u, t) = M(t, u) S(u).

omega-picture (Laplace in t, omega = i nu on the imaginary axis):

    E(omega) = -i kappa - d0 omega / (4 omega (i Delta + 1/2) + |Omega|^2) B^2
    H(omega) = -sqrt(d0) Omega / (4 omega (i Delta + 1/2) + |Omega|^2) B
    K(omega, z) = exp(E (1 - z)) H

so the retrieved field is a_out(omega) = int_0^1 K(omega, z) S(z) dz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .ensemble import Medium
from .grids import FreqGrid, UGrid, ZGrid

__all__ = [
    "FreqPropagators",
    "PropagatorError",
    "UPropagators",
    "build_freq_propagators",
    "build_u_propagators",
    "propagator_M",
    "retrieval_operator",
    "u_propagator_stack",
]

COND_T_MAX = 1e12
COND_V_MAX = 1e8


class PropagatorError(RuntimeError):
    """Near-singular propagator or failed matrix exponential."""


def _expm_eig(A: np.ndarray, times) -> np.ndarray:
    """exp(A t) for each t, via eigendecomposition with expm fallback."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lam, V = np.linalg.eig(A)
    if np.linalg.cond(V) < COND_V_MAX:
        Vi = np.linalg.inv(V)
        return np.einsum("ab,tb,bc->tac", V, np.exp(np.outer(times, lam)), Vi)
    out = np.empty((len(times),) + A.shape, dtype=complex)
    for k, t in enumerate(times):
        out[k] = expm(A * t)
    if not np.all(np.isfinite(out)):
        raise PropagatorError("matrix exponential fallback produced non-finite values")
    return out


@dataclass(frozen=True)
class UPropagators:
    """T^-1, Q, N and the storage input map at one (possibly complex) u."""

    u: complex
    Tinv: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    N: np.ndarray = field(repr=False)
    Q_in: np.ndarray = field(repr=False)

    def expN(self, t) -> np.ndarray:
        return _expm_eig(self.N, t)

    def M(self, t) -> np.ndarray:
        """M(t, u) = Q exp(N t); shape (len(t), n, n) for array t."""
        E = self.expN(t)
        out = np.einsum("ab,tbc->tac", self.Q, E)
        return out[0] if np.ndim(t) == 0 else out


def build_u_propagators(u: complex, medium: Medium, Omega: complex = 1.0) -> UPropagators:
    """Space-Laplace transfer matrices at a single grid point."""
    p = medium.params
    B = medium.B
    n = medium.n
    g = p.g
    T = 1j * u * np.eye(n) + 1j * np.diag(medium.kappa) + 0.25 * p.d0 * g * (B @ B)
    if np.linalg.cond(T) > COND_T_MAX:
        raise PropagatorError(f"T(u) is near-singular at u = {u}")
    Tinv = np.linalg.inv(T)
    sd = np.sqrt(p.d0)
    Q = -(sd * Omega / 4) * g * (Tinv @ B)
    N = (-(abs(Omega) ** 2 / 4) * g * np.eye(n)
         + (p.d0 * abs(Omega) ** 2 / 16) * g * g * (B @ Tinv @ B))
    # input boundary term: dS/dt gains -(sqrt(d0) conj(Omega) g / 4) B T^-1 a_in
    Q_in = -(sd * np.conj(Omega) / 4) * g * (B @ Tinv)
    return UPropagators(complex(u), Tinv, Q, N, Q_in)


def propagator_M(props: UPropagators, t) -> np.ndarray:
    """M(t, u) = Q(u) exp(N(u) t) for t >= 0."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("propagator_M requires t >= 0")
    return props.M(t)


@dataclass(frozen=True)
class UStack:
    """Propagators on a whole u grid, with N diagonalized once per node."""

    u: np.ndarray
    Q: np.ndarray = field(repr=False)       # (Nu, n, n)
    Q_in: np.ndarray = field(repr=False)    # (Nu, n, n)
    N: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)     # (Nu, n) eigenvalues of N
    V: np.ndarray = field(repr=False)
    Vi: np.ndarray = field(repr=False)

    def retrieval_time(self, t: np.ndarray) -> np.ndarray:
        """M(t, u) for all u and t; shape (Nt, Nu, n, n)."""
        ex = np.exp(self.lam[None, :, :] * np.asarray(t)[:, None, None])
        QV = np.einsum("uab,ubc->uac", self.Q, self.V)
        return np.einsum("uab,tub,ubc->tuac", QV, ex, self.Vi)

    def storage_time(self, tau: np.ndarray) -> np.ndarray:
        """exp(N tau) Q_in for all u and tau >= 0; shape (Nt, Nu, n, n)."""
        ex = np.exp(self.lam[None, :, :] * np.asarray(tau)[:, None, None])
        ViQ = np.einsum("uab,ubc->uac", self.Vi, self.Q_in)
        return np.einsum("uab,tub,ubc->tuac", self.V, ex, ViQ)


def u_propagator_stack(ugrid: UGrid, medium: Medium, Omega: complex = 1.0) -> UStack:
    us = ugrid.contour
    props = [build_u_propagators(u, medium, Omega) for u in us]
    Q = np.array([p.Q for p in props])
    Q_in = np.array([p.Q_in for p in props])
    N = np.array([p.N for p in props])
    lam, V = np.linalg.eig(N)
    cond = np.linalg.cond(V)
    if np.any(cond > COND_V_MAX):
        bad = us[np.argmax(cond)]
        raise PropagatorError(f"N(u) eigenvectors ill-conditioned (cond {cond.max():.1e}) at u = {bad}")
    Vi = np.linalg.inv(V)
    return UStack(us, Q, Q_in, N, lam, V, Vi)


@dataclass(frozen=True)
class FreqPropagators:
    """E, H at one point omega of the time-Laplace variable."""

    omega: complex
    E: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)

    def K(self, z) -> np.ndarray:
        """K(omega, z) = exp(E (1 - z)) H; shape (len(z), n, n) for array z."""
        zz = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.einsum("zab,bc->zac", _expm_eig(self.E, 1.0 - zz), self.H)
        return out[0] if np.ndim(z) == 0 else out


def _freq_den(omega, params, Omega):
    return 4 * omega * (1j * params.detuning + 0.5) + abs(Omega) ** 2


def build_freq_propagators(omega: complex, medium: Medium, Omega: complex = 1.0,
                           pole_tol: float = 1e-12) -> FreqPropagators:
    p = medium.params
    den = _freq_den(omega, p, Omega)
    if abs(den) < pole_tol:
        raise PropagatorError(f"pole of the frequency propagators at omega = {omega}")
    B = medium.B
    E = -1j * np.diag(medium.kappa) - (p.d0 * omega / den) * (B @ B)
    H = -(np.sqrt(p.d0) * Omega / den) * B
    return FreqPropagators(complex(omega), E, H)


def retrieval_operator(medium: Medium, zgrid: ZGrid, fgrid: FreqGrid, Omega: complex = 1.0,
                       rows: slice = slice(None)) -> np.ndarray:
    """Discretized retrieval map from spin waves to output spectra.

    Rows are (nu, n_out) and columns (z, n), both mode-minor; node weights are
    folded in as sqrt(w_nu / 2 pi) and sqrt(w_z), so the Euclidean norm of
    K @ s is the retrieved photon number of the spin wave with samples
    s / sqrt(w_z).  ``rows`` selects a slice of frequency nodes.
    """
    p = medium.params
    B = medium.B
    B2 = B @ B
    nu = fgrid.points[rows]
    wn = fgrid.weights[rows]
    z, wz = zgrid.points, zgrid.weights
    n = medium.n
    om = 1j * nu
    den = _freq_den(om, p, Omega)
    if np.any(np.abs(den) < 1e-12):
        raise PropagatorError("frequency grid hits a pole of the propagators")
    E = -1j * np.diag(medium.kappa)[None] - (p.d0 * om / den)[:, None, None] * B2[None]
    H = -(np.sqrt(p.d0) * Omega / den)[:, None, None] * B[None]
    lam, V = np.linalg.eig(E)
    VH = np.linalg.solve(V, H)
    ex = np.exp((1.0 - z)[None, :, None] * lam[:, None, :])
    K = np.einsum("vab,vzb,vbc->vazc", V, ex, VH)
    K *= np.sqrt(wz)[None, None, :, None] * np.sqrt(wn / (2 * np.pi))[:, None, None, None]
    return K.reshape(len(nu) * n, len(z) * n)
