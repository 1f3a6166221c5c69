"""Time-domain integration of the pre-adiabatic equations of motion.

In the co-moving frame the slowly varying fields obey

    d_z a = -i kappa a + (i/2) sqrt(d0) B P
    d_t P = -(1/2 + i Delta) P + (i/2) Omega(t) S + (i/2) sqrt(d0) B a
    d_t S = (i/2) conj(Omega(t)) P

The light equation has no time derivative, so at each instant a(z) is the
explicit solution

    a(z) = exp(-i kappa z) [a_in + (i/2) sqrt(d0) int_0^z exp(i kappa z') B P(z') dz']

evaluated with a spectral cumulative-integration matrix on Gauss-Legendre
nodes.  P and S on those nodes are stepped with an explicit high-order
Runge-Kutta scheme.  Input photon number, spontaneous-emission loss
int |P|^2 and the transmitted photon number are carried as extra ODE states
so the excitation budget is closed at the integrator tolerance.

This module serves as a brute-force check of the kernel results.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline

from .ensemble import Medium
from .fields import LightMode, SpinWave
from .grids import ZGrid, z_grid

__all__ = [
    "ControlField",
    "DynamicsError",
    "RetrievalResult",
    "StorageResult",
    "integrate_retrieval",
    "integrate_storage",
    "input_from_spinwave",
    "integrated_intensity",
    "time_signal",
]


class DynamicsError(RuntimeError):
    """The time stepper failed (usually a stiff regime: large d0 or Omega)."""


class ReadOut(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class ControlField:
    """Control Rabi frequency Omega(t) (units of gamma) and optional detuning.

    ``envelope`` is a complex constant or a callable of t.  A detuning of
    None defers to the ensemble parameters.
    """

    envelope: complex | Callable = 1.0
    detuning: float | None = None

    def __call__(self, t):
        if callable(self.envelope):
            return np.asarray(self.envelope(t), dtype=complex)
        return np.full(np.shape(t), complex(self.envelope))

    @property
    def is_constant(self) -> bool:
        return not callable(self.envelope)

    @classmethod
    def constant(cls, omega: complex = 1.0, detuning: float | None = None) -> "ControlField":
        return cls(complex(omega), detuning)

    @classmethod
    def gaussian(cls, peak: float, center: float, width: float,
                 detuning: float | None = None) -> "ControlField":
        """Omega(t) = peak exp(-(t - center)^2 / (2 width^2))."""
        if width <= 0:
            raise ValueError("width must be positive")
        return cls(lambda t: peak * np.exp(-0.5 * ((np.asarray(t) - center) / width) ** 2), detuning)

    @classmethod
    def tabulated(cls, t: np.ndarray, values: np.ndarray,
                  detuning: float | None = None) -> "ControlField":
        """Linear interpolation of samples; zero outside the table."""
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=complex)

        def env(x):
            return (np.interp(x, t, v.real, left=0.0, right=0.0)
                    + 1j * np.interp(x, t, v.imag, left=0.0, right=0.0))
        return cls(env, detuning)


def integrated_intensity(control: ControlField, t: float, t0: float = 0.0) -> float:
    """h = int_{t0}^{t} |Omega(t')|^2 dt' (adaptive quadrature for envelopes)."""
    if control.is_constant:
        return float(abs(complex(control.envelope)) ** 2 * (t - t0))
    val, _ = quad(lambda s: float(abs(control(s)) ** 2), t0, t, limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(val)


def time_signal(mode: LightMode | Callable) -> Callable:
    """Callable a(t) -> (n,) for a light mode sampled in time (zero outside its window).

    Uniformly sampled modes are interpolated by cubic splines, others (Gauss-
    Legendre nodes) by the barycentric polynomial through all nodes.
    Frequency-domain modes are rejected: use :func:`input_from_spinwave`.
    """
    if callable(mode) and not isinstance(mode, LightMode):
        return mode
    if mode.domain != "time":
        raise ValueError("time_signal needs a time-domain mode; convert spectra with input_from_spinwave")
    x = mode.points
    vals = mode.values
    lo, hi = x[0], x[-1]
    tol = 1e-12 * max(hi - lo, 1.0)
    if len(x) > 2 and np.allclose(np.diff(x), x[1] - x[0]):
        spline = CubicSpline(x, vals, axis=1)

        def a_spline(t):
            if t < lo - tol or t > hi + tol:
                return np.zeros(vals.shape[0], dtype=complex)
            return spline(t)
        return a_spline
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    lw = 1.0 / np.prod(diff / (0.5 * (hi - lo)), axis=1)
    lw /= np.max(np.abs(lw))

    def a_bary(t):
        if t < lo - tol or t > hi + tol:
            return np.zeros(vals.shape[0], dtype=complex)
        d = t - x
        hit = np.abs(d) < tol
        if np.any(hit):
            return vals[:, np.argmax(hit)].copy()
        c = lw / d
        return (vals @ c) / c.sum()
    return a_bary


def _cumulative_matrix(zg: ZGrid) -> np.ndarray:
    """I[i, j] with sum_j I[i, j] f(z_j) = int_0^{z_i} f(z) dz for polynomials of degree < N."""
    N = len(zg)
    x = 2 * zg.points - 1
    V = npleg.legvander(x, N - 1)
    anti = np.empty((N, N))
    for k in range(N):
        e = np.zeros(N)
        e[k] = 1.0
        anti[:, k] = npleg.legval(x, npleg.legint(e, lbnd=-1))
    return 0.5 * anti @ np.linalg.inv(V)


class _System:
    """Linear right-hand side for P, S on axial nodes, mode-minor packing (z, n)."""

    def __init__(self, medium: Medium, zg: ZGrid, detuning: float):
        p = medium.params
        n = medium.n
        Nz = len(zg)
        self.n, self.Nz = n, Nz
        self.zg = zg
        B = medium.B
        kap = medium.kappa
        c = 0.5j * np.sqrt(p.d0)
        self.c = c
        Ic = _cumulative_matrix(zg)
        ph = np.exp(-1j * np.outer(zg.points, kap))                 # (Nz, n)
        # a from P:  a[i, k] = c e^{-i k_k z_i} sum_j Ic[i, j] e^{i k_k z_j} (B P)[j, k]
        A_aP = c * np.einsum("ik,ij,jk,kl->ikjl", ph, Ic, 1 / ph, B)
        self.A_aP = A_aP.reshape(Nz * n, Nz * n)
        A_oP = c * np.einsum("k,j,jk,kl->kjl", np.exp(-1j * kap), zg.weights, 1 / ph, B)
        self.A_oP = A_oP.reshape(n, Nz * n)
        self.out_phase = np.exp(-1j * kap)
        self.free_phase = ph.reshape(-1)                             # e^{-i kappa z} on nodes
        BI = np.kron(np.eye(Nz), B)
        self.BI = BI
        self.M = -(0.5 + 1j * detuning) * np.eye(Nz * n) + c * BI @ self.A_aP
        self.drive = c * BI * self.free_phase[None, :]               # acts on tiled a_in
        self.w = np.repeat(zg.weights, n)

    def light(self, P, a_in):
        """a at the nodes and at z = 1."""
        a = self.A_aP @ P + self.free_phase * np.tile(a_in, self.Nz)
        a_out = self.A_oP @ P + self.out_phase * a_in
        return a, a_out

    def rhs(self, t, y, control, a_in_fn):
        K = self.Nz * self.n
        P, S = y[:K], y[K:2 * K]
        Om = complex(control(t))
        a_in = a_in_fn(t) if a_in_fn is not None else np.zeros(self.n, complex)
        dP = self.M @ P + 0.5j * Om * S
        if a_in_fn is not None:
            dP += self.drive @ np.tile(a_in, self.Nz)
        dS = 0.5j * np.conj(Om) * P
        a_out = self.A_oP @ P + self.out_phase * a_in
        # per-node loss sum_n |P_n(z_j)|^2, then transmitted and input photon rates
        lz = np.sum(np.abs(P.reshape(self.Nz, self.n)) ** 2, axis=1)
        extras = np.array([np.sum(np.abs(a_out) ** 2), np.sum(np.abs(a_in) ** 2)], dtype=complex)
        return np.concatenate([dP, dS, lz, extras])

    @property
    def n_state(self) -> int:
        return 2 * self.Nz * self.n + self.Nz + 2

    def tallies(self, y):
        """(loss profile over z nodes, total loss, transmitted, input) from a state."""
        K = self.Nz * self.n
        lz = y[2 * K:2 * K + self.Nz].real
        leak, n_in = y[2 * K + self.Nz:].real
        return lz, float(np.sum(self.zg.weights * lz)), float(leak), float(n_in)


def _solve(sys, y0, t_span, control, a_in_fn, t_eval, rtol, atol, medium, dense=False):
    sol = solve_ivp(sys.rhs, t_span, y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol,
                    args=(control, a_in_fn), dense_output=dense)
    if sol.status != 0:
        om = abs(complex(control(0.5 * (t_span[0] + t_span[1]))))
        raise DynamicsError(f"time stepping failed at t = {sol.t[-1]:.4g} for d0 = {medium.params.d0}, "
                            f"|Omega| ~ {om:.3g}: {sol.message}")
    return sol


@dataclass
class StorageResult:
    """Outcome of a storage run; the fields of the budget are photon numbers."""

    spinwave: SpinWave
    leaked: LightMode
    loss: float
    P_final: np.ndarray = field(repr=False)
    input_number: float = 0.0
    leaked_number: float = 0.0

    @property
    def efficiency(self) -> float:
        return self.spinwave.norm2()

    @property
    def budget_residual(self) -> float:
        """input - (stored + leaked + lost + left in P)."""
        Pn = float(np.sum(self.spinwave.weights[None, :] * np.abs(self.P_final) ** 2))
        return float(self.input_number - (self.efficiency + self.leaked_number + self.loss + Pn))


@dataclass
class RetrievalResult:
    a_out: LightMode
    eta: float
    loss: float
    residual: float
    complete: bool
    t_end: float
    initial_number: float = 1.0
    status: str = "ok"
    loss_profile: np.ndarray | None = field(default=None, repr=False)
    _pieces: list = field(default_factory=list, repr=False)
    _out_map: tuple | None = field(default=None, repr=False)

    def output_at(self, t: float) -> np.ndarray:
        """a_out(t) from the dense ODE solution (zero outside [0, t_end])."""
        A_oP, K = self._out_map
        for t0, t1, sol in self._pieces:
            if t0 <= t <= t1:
                return A_oP @ sol(t)[:K]
        return np.zeros(A_oP.shape[0], dtype=complex)

    @property
    def budget_residual(self) -> float:
        """initial - (retrieved + lost + left in S and P)."""
        return float(self.initial_number - (self.eta + self.loss + self.residual))


def _trapezoid_weights(t: np.ndarray) -> np.ndarray:
    if len(t) < 2:
        return np.ones(len(t))
    d = np.diff(t)
    w = np.zeros(len(t))
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def integrate_storage(a_in, control: ControlField, medium: Medium, t_span: tuple | None = None,
                      zgrid: ZGrid | None = None, n_out: int = 200, rtol: float = 1e-10,
                      atol: float = 1e-13) -> StorageResult:
    """Write ``a_in`` into an initially empty ensemble over ``t_span``.

    ``a_in`` is a time-domain :class:`LightMode` or a callable t -> (n,)
    array.  For time-domain modes the window defaults to the span
    of their grid.  Returns the spin wave at the end of the window, the
    transmitted light (sampled on ``n_out`` uniform times) and the
    spontaneous-emission loss.
    """
    if t_span is None:
        if isinstance(a_in, LightMode) and a_in.domain == "time":
            t_span = (float(a_in.points[0]), float(a_in.points[-1]))
        else:
            raise ValueError("t_span is required for frequency-domain or callable inputs")
    zg = zgrid or z_grid(40)
    det = medium.params.detuning if control.detuning is None else control.detuning
    sys = _System(medium, zg, det)
    fn = time_signal(a_in)
    K = sys.Nz * sys.n
    y0 = np.zeros(sys.n_state, dtype=complex)
    t_eval = np.linspace(t_span[0], t_span[1], n_out)
    sol = _solve(sys, y0, t_span, control, fn, t_eval, rtol, atol, medium)
    yT = sol.y[:, -1]
    P = yT[:K].reshape(sys.Nz, sys.n).T
    S = yT[K:2 * K].reshape(sys.Nz, sys.n).T
    _, loss, leak, n_in = sys.tallies(yT)
    outs = np.array([sys.light(sol.y[:K, i], fn(t))[1] for i, t in enumerate(sol.t)]).T
    m = medium.basis.m
    return StorageResult(SpinWave(S, zg.points, zg.weights, m),
                         LightMode(outs, sol.t, _trapezoid_weights(sol.t), m), loss, P, n_in, leak)


def integrate_retrieval(S0: SpinWave, control: ControlField, medium: Medium,
                        direction: ReadOut | str = ReadOut.FORWARD, t_max: float | None = None,
                        chunk: float | None = None, residual_tol: float = 1e-6,
                        n_out: int = 100, rtol: float = 1e-10, atol: float = 1e-13) -> RetrievalResult:
    """Read out the spin wave ``S0`` (on Gauss-Legendre nodes in [0, 1]).

    Backward read-out is forward read-out of the mirrored spin wave
    S0(1 - z).  The run is extended in windows of length ``chunk`` until the
    excitation left in S and P drops below ``residual_tol`` or ``t_max`` is
    reached; an incomplete run is flagged in ``status``.
    """
    direction = ReadOut(direction)
    zg = ZGrid(S0.points, S0.weights)
    if not np.allclose(zg.points[::-1], 1 - zg.points):
        raise ValueError("spin wave must be sampled on a symmetric grid")
    vals = S0.values[:, ::-1] if direction is ReadOut.BACKWARD else S0.values
    det = medium.params.detuning if control.detuning is None else control.detuning
    sys = _System(medium, zg, det)
    K = sys.Nz * sys.n
    y = np.zeros(sys.n_state, dtype=complex)
    y[K:2 * K] = vals.T.reshape(-1)
    norm0 = float(np.sum(sys.w * np.abs(y[K:2 * K]) ** 2))
    if chunk is None:
        probe = np.linspace(0.0, 200.0, 401)
        om2 = max(float(np.max(np.abs(control(probe)) ** 2)), 1e-6)
        # read-out time ~ (d0 + 4 Delta^2) / |Omega|^2 (slow light, slower off resonance)
        chunk = 4.0 * (2.0 + medium.params.d0 + 4.0 * det**2) / om2 + 20.0
    if t_max is None:
        t_max = 20 * chunk
    t0 = 0.0
    times, outs, pieces = [], [], []
    residual = norm0
    step = 0
    while True:
        step += 1
        # window edges from the step count, so rounding cannot leave an empty last window
        t1 = min(step * chunk, t_max)
        if t_max - t1 < 1e-9 * chunk:
            t1 = t_max
        t_eval = np.linspace(t0, t1, n_out)
        sol = _solve(sys, y, (t0, t1), control, None, t_eval, rtol, atol, medium, dense=True)
        pieces.append((t0, t1, sol.sol))
        for i in range(len(sol.t) - (0 if t1 >= t_max else 1)):
            times.append(sol.t[i])
            outs.append(sys.light(sol.y[:K, i], np.zeros(sys.n, complex))[1])
        y = sol.y[:, -1]
        residual = float(np.sum(sys.w * (np.abs(y[:K]) ** 2 + np.abs(y[K:2 * K]) ** 2)))
        t0 = t1
        if residual < residual_tol * max(norm0, 1e-300) or norm0 == 0 or t1 >= t_max:
            break
    loss_z, loss, eta, _ = sys.tallies(y)
    complete = residual <= residual_tol * max(norm0, 1e-300) or norm0 == 0
    status = "ok" if complete else "incomplete"
    if not complete:
        warnings.warn(f"retrieval incomplete: residual {residual:.2e} at t = {t0:.4g}", RuntimeWarning)
    times = np.array(times)
    return RetrievalResult(LightMode(np.array(outs).T, times, _trapezoid_weights(times), medium.basis.m),
                           eta, loss, residual, complete, t0, norm0, status, loss_z, pieces, (sys.A_oP, K))


def input_from_spinwave(S: SpinWave, control: ControlField, medium: Medium,
                        normalize: bool = True, **kwargs) -> tuple:
    """Time-domain input that is the time-reversed conjugate of the read-out of ``S``.

    Returns (a_in, t_span): a_in(t) = conj(a_ret(-t)) on t in [-t_end, 0],
    normalized to unit photon number when ``normalize``.  Inputs found in the
    frequency picture are of this form, so this yields them in the time
    domain without a Fourier sum.
    """
    ret = integrate_retrieval(S, control, medium, **kwargs)
    scale = 1.0 / np.sqrt(ret.eta) if normalize and ret.eta > 0 else 1.0

    def a_in(t):
        return scale * np.conj(ret.output_at(-t))
    return a_in, (-ret.t_end, 0.0)
