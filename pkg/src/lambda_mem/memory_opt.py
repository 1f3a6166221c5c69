"""Storage, storage + forward read-out and storage + backward read-out kernels.

Two independent pictures are implemented.

FREQ_SPACE (default for efficiencies).  With K the discretized retrieval map
of :func:`propagators.retrieval_operator` and Phi the flip z -> 1 - z, the
maps from an input spectrum x to the stored spin wave and to the output are

    storage   S = Phi K^T x
    forward   y = K Phi K^T x
    backward  y = K K^T x

(the storage map is the transposed, mirrored retrieval map).  Writing the
retrieval Gram as W = K^dagger K = R^dagger R, the non-zero singular values of
these maps are those of the small matrices R Phi R^T and R R^T, so only
(N_z n)-sized problems are ever factorized.  Input spectra are samples of
int exp(-i nu t) a_in(t) dt times sqrt(w_nu / 2 pi).

U_SPACE.  Fields live on time grids and the spin wave on the u contour:

    S(u)      = int_0^inf exp(N tau) Q_in a_in(-tau) dtau
    a_out(t)  = (1/4 pi^2) sum_jk w_j w_k M(t, u_j) f(u_j, u_k) S(u_k)

with f(u, u') = int_0^1 exp(i u (1 - z) + i u' z) dz for forward and
int_0^1 exp(i (u + u') (1 - z)) dz for backward read-out (the spin wave is
restricted to the ensemble before it is read out).  Truncating the
u integral at u_max leaves an error ~ 1/u_max, removed by Richardson
extrapolation between u_max and u_max / 2.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .ensemble import Medium
from .fields import LightMode, SpinWave
from .grids import FreqGrid, TimeGrid, UGrid, ZGrid, freq_grid, time_grid, u_grid, z_grid
from .propagators import retrieval_operator, u_propagator_stack
from .retrieval_opt import OptimizationResult, _restriction_weight, retrieval_gram

__all__ = [
    "Direction",
    "FreqKernel",
    "KernelSpec",
    "Picture",
    "UKernel",
    "auto_grid",
    "build_backward_kernel",
    "build_forward_kernel",
    "build_kernel",
    "build_storage_kernel",
    "input_mode",
    "optimize_memory",
    "output_mode",
    "reconstruct_output",
    "reconstruct_spinwave",
    "with_direction",
]


class Direction(str, enum.Enum):
    STORAGE = "storage"
    FORWARD = "forward"
    BACKWARD = "backward"


class Picture(str, enum.Enum):
    U_SPACE = "u"
    FREQ_SPACE = "omega"


@dataclass
class KernelSpec:
    """Direction, picture and grid choices for one kernel.

    Unset grid entries are filled from :func:`auto_grid`-style defaults
    depending on the picture.
    """

    direction: Direction = Direction.FORWARD
    picture: Picture = Picture.FREQ_SPACE
    N_z: int = 40
    N_nu: int = 300
    nu_scale: float = 1.0
    u_max: float | None = None
    du: float = 1.0
    u_shift: float = 3.0
    N_t: int = 64
    T: float | None = None
    extrapolate: bool = True
    Omega: float = 1.0

    def __post_init__(self):
        self.direction = Direction(self.direction)
        self.picture = Picture(self.picture)


def auto_grid(d0: float, F: float) -> dict:
    """Default transverse truncation for a given optical depth and Fresnel number.

    The cut-off radius grows as 1/sqrt(F) so diffracted light does not reach
    the virtual wall, and n_max resolves k_perp up to ~14 sqrt(F) (at least 5)
    in units of 1/sigma.  N_z grows slowly with d0 to resolve the absorption
    length of backward-optimal spin waves.
    """
    R = max(4.0, 1.7 / np.sqrt(F))
    kmax = max(5.0, 14.0 * np.sqrt(F))
    n_max = int(np.ceil(kmax * R / np.pi))
    N_z = 40 if d0 <= 120 else 60
    N_nu = 300 if d0 <= 120 else 400
    return {"R": float(R), "n_max": n_max, "N_z": N_z, "N_nu": N_nu}


# ------------------------------------------------------------ FREQ_SPACE

@dataclass
class FreqKernel:
    """Compressed omega-picture kernel.

    ``core`` is the small matrix whose singular values squared are the
    efficiencies; ``hermitian`` is core core^dagger.
    """

    spec: KernelSpec
    medium: Medium = field(repr=False)
    zgrid: ZGrid = field(repr=False)
    fgrid: FreqGrid = field(repr=False)
    W: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    core: np.ndarray = field(repr=False)

    @property
    def hermitian(self) -> np.ndarray:
        return self.core @ self.core.conj().T

    def flip(self) -> np.ndarray:
        n = self.medium.n
        Nz = len(self.zgrid)
        return (np.arange(Nz)[::-1, None] * n + np.arange(n)[None, :]).ravel()

    def apply_K(self, X: np.ndarray, chunk: int = 50) -> np.ndarray:
        """K @ X without storing K; X has shape (N_z n, k)."""
        out = []
        for i0 in range(0, len(self.fgrid), chunk):
            K = retrieval_operator(self.medium, self.zgrid, self.fgrid, self.spec.Omega,
                                   rows=slice(i0, i0 + chunk))
            out.append(K @ X)
        return np.vstack(out)

    def apply_KT(self, x: np.ndarray, chunk: int = 50) -> np.ndarray:
        """K^T @ x without storing K."""
        n = self.medium.n
        acc = np.zeros((len(self.zgrid) * n,) + x.shape[1:], dtype=complex)
        for i0 in range(0, len(self.fgrid), chunk):
            K = retrieval_operator(self.medium, self.zgrid, self.fgrid, self.spec.Omega,
                                   rows=slice(i0, i0 + chunk))
            acc += K.T @ x[i0 * n:(i0 + chunk) * n]
        return acc


def _core(R: np.ndarray, direction: Direction, N_z: int, n: int) -> np.ndarray:
    if direction is Direction.STORAGE:
        return R
    if direction is Direction.FORWARD:
        idx = (np.arange(N_z)[::-1, None] * n + np.arange(n)[None, :]).ravel()
        return R[:, idx] @ R.T
    return R @ R.T


def _freq_kernel(spec: KernelSpec, medium: Medium) -> FreqKernel:
    zg = z_grid(spec.N_z)
    fg = freq_grid(spec.N_nu, spec.nu_scale)
    W = retrieval_gram(medium, zg, fg)
    N = W.shape[0]
    # jitter keeps the Cholesky factor defined on the numerically null space
    eps = 1e-13 * max(float(np.trace(W).real) / N, 1e-300)
    R = sla.cholesky(W + eps * np.eye(N))
    return FreqKernel(spec, medium, zg, fg, W, R, _core(R, spec.direction, spec.N_z, medium.n))


def with_direction(kernel: FreqKernel, direction: Direction | str) -> FreqKernel:
    """The same FREQ_SPACE kernel for another direction, reusing its retrieval Gram."""
    direction = Direction(direction)
    spec = KernelSpec(**{**kernel.spec.__dict__, "direction": direction})
    return FreqKernel(spec, kernel.medium, kernel.zgrid, kernel.fgrid, kernel.W, kernel.R,
                      _core(kernel.R, direction, len(kernel.zgrid), kernel.medium.n))


# ------------------------------------------------------------ U_SPACE

@dataclass
class UKernel:
    """u-picture memory map Gamma from input to output (or stored) samples.

    ``G`` maps sqrt(w_tau) a_in(-tau) to sqrt(w_t) a_out(t) (or, for storage,
    to the spin-wave coordinates whose Euclidean norm is the stored number).
    """

    spec: KernelSpec
    medium: Medium = field(repr=False)
    ugrid: UGrid = field(repr=False)
    tgrid: TimeGrid = field(repr=False)
    G: np.ndarray = field(repr=False)
    G_coarse: np.ndarray | None = field(default=None, repr=False)

    @property
    def hermitian(self) -> np.ndarray:
        return self.G.conj().T @ self.G


def _u_defaults(spec: KernelSpec, medium: Medium):
    p = medium.params
    u_max = spec.u_max or max(320.0, 4.0 * p.d0, 4.0 * float(medium.kappa[-1]))
    T = spec.T or max(40.0, 2.0 * p.d0) / abs(spec.Omega) ** 2
    return float(u_max), float(T)


def _u_map(medium: Medium, direction: Direction, ug: UGrid, tg: TimeGrid, Omega: float,
           chunk: int = 64) -> np.ndarray:
    n = medium.n
    Nt = len(tg)
    Nu = len(ug)
    us = ug.contour
    st = u_propagator_stack(ug, medium, Omega)
    swt = np.sqrt(tg.weights)
    wu = ug.weights / (2 * np.pi)
    # C[(k, a), (tau, b)] = w_k/2pi exp(N_k tau) Q_in,k sqrt(w_tau)
    C = np.empty((Nu, n, Nt, n), dtype=complex)
    for k0 in range(0, Nu, chunk):
        sl = slice(k0, k0 + chunk)
        sub = _substack(st, sl)
        C[sl] = np.einsum("tkab,k,t->katb", sub.storage_time(tg.points), wu[sl], swt)
    C = C.reshape(Nu, n * Nt * n)
    if direction is Direction.STORAGE:
        # Euclidean coordinates of the z-restricted spin wave: sqrt(P) C with
        # P_jk = int_0^1 exp(i (u_k - conj(u_j)) z) dz (positive semidefinite)
        P = _restriction_weight(us, us)
        P = 0.5 * (P + P.conj().T)
        ev, V = np.linalg.eigh(P)
        ev = np.clip(ev, 0, None)
        half = (V * np.sqrt(ev)) @ V.conj().T
        return (half @ C).reshape(Nu * n, Nt * n)
    x = us[:, None] + us[None, :] if direction is Direction.BACKWARD else us[None, :] - us[:, None]
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    f = np.where(small, 1.0 + 0.5j * x, (np.exp(1j * xs) - 1) / (1j * xs))
    if direction is Direction.FORWARD:
        f = np.exp(1j * us)[:, None] * f
    G = np.zeros((Nt * n, Nt * n), dtype=complex)
    for j0 in range(0, Nu, chunk):
        sl = slice(j0, j0 + chunk)
        sub = _substack(st, sl)
        D = (f[sl] @ C).reshape(-1, n, Nt * n)              # (chunk, n, Nt n)
        O = np.einsum("tjab,j,t->tajb", sub.retrieval_time(tg.points), wu[sl], swt)
        G += O.reshape(Nt * n, -1) @ D.reshape(-1, Nt * n)
    return G


def _substack(st, sl):
    from .propagators import UStack
    return UStack(st.u[sl], st.Q[sl], st.Q_in[sl], st.N[sl], st.lam[sl], st.V[sl], st.Vi[sl])


def _u_kernel(spec: KernelSpec, medium: Medium) -> UKernel:
    u_max, T = _u_defaults(spec, medium)
    tg = time_grid(spec.N_t, T)

    def grid(umax):
        n_u = 2 * int(np.ceil(umax / spec.du)) + 1
        return u_grid(umax, n_u, spec.u_shift)

    ug = grid(u_max)
    G = _u_map(medium, spec.direction, ug, tg, spec.Omega)
    Gc = _u_map(medium, spec.direction, grid(0.5 * u_max), tg, spec.Omega) if spec.extrapolate else None
    return UKernel(spec, medium, ug, tg, G, Gc)


# ------------------------------------------------------------ public API

def build_kernel(spec: KernelSpec, medium: Medium):
    if spec.picture is Picture.FREQ_SPACE:
        return _freq_kernel(spec, medium)
    return _u_kernel(spec, medium)


def build_storage_kernel(spec: KernelSpec, medium: Medium):
    spec.direction = Direction.STORAGE
    return build_kernel(spec, medium)


def build_forward_kernel(spec: KernelSpec, medium: Medium):
    spec.direction = Direction.FORWARD
    return build_kernel(spec, medium)


def build_backward_kernel(spec: KernelSpec, medium: Medium):
    spec.direction = Direction.BACKWARD
    return build_kernel(spec, medium)


def _top_svd(M: np.ndarray, k: int):
    U, s, Vh = np.linalg.svd(M)
    return U[:, :k], s[:k], Vh[:k]


def optimize_memory(kernel, k: int = 4) -> OptimizationResult:
    """Top efficiencies with their optimal input modes (and matching outputs).

    ``modes`` are input light modes of shape (n, N_grid): time samples on
    t = -tau <= 0 for U_SPACE kernels, spectra on the nu nodes for FREQ_SPACE.
    ``metadata["outputs"]`` holds the corresponding output modes (for
    storage: stored spin waves over z).  FREQ_SPACE results also carry
    ``metadata["source_spinwaves"]``: spin waves whose forward read-out,
    time-reversed and conjugated, is the optimal input (see
    :func:`dynamics.input_from_spinwave`).
    """
    t0 = time.perf_counter()
    med = kernel.medium
    n = med.n
    spec = kernel.spec
    meta = {"m": med.basis.m, "d0": med.params.d0, "F": med.params.F, "n_max": med.n,
            "R": med.basis.R, "direction": spec.direction.value, "picture": spec.picture.value}
    if isinstance(kernel, FreqKernel):
        Nz = len(kernel.zgrid)
        if spec.direction is Direction.STORAGE:
            ev, V = sla.eigh(kernel.W, subset_by_index=[kernel.W.shape[0] - k, kernel.W.shape[0] - 1])
            order = np.argsort(ev)[::-1]
            eta = ev[order]
            V = V[:, order]
            # optimal input is the conjugate of the field retrieved from the
            # spin wave that is the top eigenvector of W
            X = np.conj(kernel.apply_K(V)) / np.sqrt(np.clip(eta, 1e-300, None))
            idx = kernel.flip()
            src = V                      # input = time-reversed read-out of these
            S = np.conj(V)[idx]          # stored spin waves Phi conj(v)
            outputs = [(S[:, i].reshape(Nz, n) / np.sqrt(kernel.zgrid.weights)[:, None]).T
                       for i in range(k)]
        else:
            U, s, Vh = _top_svd(kernel.core, k)
            eta = s**2
            Rinv = sla.solve_triangular(kernel.R, np.eye(kernel.R.shape[0]))
            src = Rinv @ Vh.T
            X = np.conj(kernel.apply_K(src))
            Y = kernel.apply_K(Rinv @ U)
            outputs = [_unweight_freq(Y[:, i], kernel) for i in range(k)]
        modes = [_unweight_freq(X[:, i], kernel) for i in range(k)]
        sw_z = np.sqrt(kernel.zgrid.weights)[:, None]
        meta["source_spinwaves"] = [(src[:, i].reshape(Nz, n) / sw_z).T for i in range(k)]
        meta.update({"representation": "input_freq", "nu": kernel.fgrid.points,
                     "nu_weights": kernel.fgrid.weights / (2 * np.pi), "N_z": Nz,
                     "N_nu": len(kernel.fgrid), "outputs": outputs,
                     "output_representation": "spinwave_z" if spec.direction is Direction.STORAGE
                     else "output_freq", "z": kernel.zgrid.points, "z_weights": kernel.zgrid.weights})
    else:
        U, s, Vh = _top_svd(kernel.G, k)
        eta = s**2
        tg = kernel.tgrid
        Nt = len(tg)
        if kernel.G_coarse is not None:
            s_c = np.linalg.svd(kernel.G_coarse, compute_uv=False)[:k]
            meta["eta_unextrapolated"] = eta.copy()
            meta["eta_coarse_u"] = s_c**2
            eta = 2 * eta - s_c**2
        swt = np.sqrt(tg.weights)
        modes = []
        outputs = []
        for i in range(k):
            x = Vh[i].conj().reshape(Nt, n) / swt[:, None]      # a_in(-tau)
            modes.append(x[::-1].T)                             # ascending t = -tau
            if spec.direction is Direction.STORAGE:
                outputs.append(None)
            else:
                y = (U[:, i] * s[i]).reshape(Nt, n) / swt[:, None]
                outputs.append(y.T)
        meta.update({"representation": "input_time", "t": -tg.points[::-1],
                     "t_weights": tg.weights[::-1], "t_out": tg.points, "t_out_weights": tg.weights,
                     "outputs": outputs, "output_representation": "output_time",
                     "u_max": kernel.ugrid.u_max, "N_u": len(kernel.ugrid), "u_shift": kernel.ugrid.shift,
                     "N_t": Nt, "T": float(tg.points[-1] + tg.points[0])})
    meta["seconds"] = time.perf_counter() - t0
    return OptimizationResult(np.asarray(eta, dtype=float), modes, meta)


def _unweight_freq(vec: np.ndarray, kernel: FreqKernel) -> np.ndarray:
    n = kernel.medium.n
    wv = np.sqrt(kernel.fgrid.weights / (2 * np.pi))
    return (vec.reshape(len(kernel.fgrid), n) / wv[:, None]).T


def input_mode(result: OptimizationResult, i: int = 0) -> LightMode:
    """Optimal input ``i`` as a :class:`LightMode`."""
    meta = result.metadata
    if meta["representation"] == "input_freq":
        return LightMode(result.modes[i], meta["nu"], meta["nu_weights"], meta["m"], domain="freq")
    return LightMode(result.modes[i], meta["t"], meta["t_weights"], meta["m"], domain="time")


def output_mode(result: OptimizationResult, i: int = 0) -> LightMode:
    meta = result.metadata
    out = meta["outputs"][i]
    if meta["output_representation"] == "output_freq":
        return LightMode(out, meta["nu"], meta["nu_weights"], meta["m"], domain="freq")
    if meta["output_representation"] == "output_time":
        return LightMode(out, meta["t_out"], meta["t_out_weights"], meta["m"], domain="time")
    raise ValueError("storage results have spin-wave outputs; use stored_spinwave")


def reconstruct_spinwave(a_in: LightMode, kernel) -> SpinWave:
    """Spin wave stored on z in [0, 1] by the input ``a_in``.

    Its squared norm is the storage efficiency of ``a_in``.
    """
    med = kernel.medium
    n = med.n
    if isinstance(kernel, FreqKernel):
        if a_in.domain != "freq":
            raise ValueError("FREQ_SPACE kernels take frequency-domain inputs")
        x = (a_in.values * np.sqrt(a_in.weights)[None, :]).T.ravel()
        S = kernel.apply_KT(x[:, None])[:, 0][kernel.flip()]
        Nz = len(kernel.zgrid)
        vals = (S.reshape(Nz, n) / np.sqrt(kernel.zgrid.weights)[:, None]).T
        return SpinWave(vals, kernel.zgrid.points, kernel.zgrid.weights, med.basis.m)
    # u picture: S(u) from the input, then the inverse transform restricted to [0, 1]
    tg = kernel.tgrid
    if a_in.domain != "time" or len(a_in.points) != len(tg) or \
            not np.allclose(-a_in.points[::-1], tg.points):
        raise ValueError("input must live on the kernel's storage window t = -tau")
    x = (a_in.values[:, ::-1] * np.sqrt(tg.weights)[None, :]).T      # (Nt, n) at tau nodes
    ug = kernel.ugrid
    st = u_propagator_stack(ug, med, kernel.spec.Omega)
    Su = np.einsum("tkab,tb,t->ka", st.storage_time(tg.points), x, np.sqrt(tg.weights))
    zg = z_grid(64)
    ph = np.exp(1j * np.outer(zg.points, ug.contour)) * (ug.weights / (2 * np.pi))[None, :]
    vals = (ph @ Su).T
    return SpinWave(vals, zg.points, zg.weights, med.basis.m)


def reconstruct_output(a_in: LightMode, kernel) -> LightMode:
    """Output field produced by ``a_in``; its squared norm is the efficiency."""
    med = kernel.medium
    n = med.n
    if kernel.spec.direction is Direction.STORAGE:
        raise ValueError("storage kernels produce spin waves; use reconstruct_spinwave")
    if isinstance(kernel, FreqKernel):
        x = (a_in.values * np.sqrt(a_in.weights)[None, :]).T.ravel()
        S = kernel.apply_KT(x[:, None])
        if kernel.spec.direction is Direction.FORWARD:
            S = S[kernel.flip()]
        y = kernel.apply_K(S)[:, 0]
        vals = _unweight_freq(y, kernel)
        return LightMode(vals, a_in.points, a_in.weights, med.basis.m, domain="freq")
    tg = kernel.tgrid
    x = (a_in.values[:, ::-1] * np.sqrt(tg.weights)[None, :]).T.ravel()
    y = (kernel.G @ x).reshape(len(tg), n) / np.sqrt(tg.weights)[:, None]
    return LightMode(y.T, tg.points, tg.weights, med.basis.m, domain="time")
