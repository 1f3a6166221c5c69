"""Ensemble parameters and the density-weighted transverse coupling matrix."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bessel_basis import DEFAULT_RADIUS, TransverseBasis, build_basis, radial_quadrature

__all__ = [
    "CouplingError",
    "CouplingMatrix",
    "Density",
    "EnsembleParams",
    "Medium",
    "build_medium",
    "coupling_matrix",
    "diffraction_rates",
]


class Density(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class CouplingError(RuntimeError):
    """Radial quadrature of the coupling matrix failed to converge."""


# How the atomic density enters the overlap integral.  With field operators
# normalized by sqrt(n), the light couples through the *amplitude*
# sqrt(n(rho)/n0); weighting by n(rho)/n0 itself is kept as an option.
WEIGHTINGS = ("amplitude", "density")


@dataclass(frozen=True)
class EnsembleParams:
    """Physical configuration in dimensionless form.

    Parameters
    ----------
    d0 : float
        Peak optical depth.
    F : float
        Fresnel number sigma^2 / (L lambda).
    detuning : float
        One-photon detuning in units of the half-width gamma.
    density : Density
        Transverse density profile; GAUSSIAN is n/n0 = exp(-rho^2/2).
    weighting : str
        ``"amplitude"`` (default) weights the overlap by sqrt(n/n0),
        ``"density"`` by n/n0.
    """

    d0: float
    F: float
    detuning: float = 0.0
    density: Density = Density.GAUSSIAN
    weighting: str = "amplitude"

    def __post_init__(self):
        if not self.d0 > 0:
            raise ValueError(f"d0 must be > 0, got {self.d0}")
        if not self.F > 0:
            raise ValueError(f"F must be > 0, got {self.F}")
        object.__setattr__(self, "density", Density(self.density))
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")

    @property
    def g(self) -> complex:
        """Two-level response 1 / (1/2 + i detuning)."""
        return 1.0 / (0.5 + 1j * self.detuning)


@dataclass(frozen=True)
class CouplingMatrix:
    """Real symmetric overlap matrix B of one azimuthal block."""

    m: int
    B: np.ndarray = field(repr=False)

    @property
    def n_max(self) -> int:
        return self.B.shape[0]


def _weight(rho, density: Density, weighting: str):
    if density is Density.UNIFORM:
        return np.ones_like(rho)
    # n/n0 = exp(-rho^2/2); amplitude weighting takes its square root
    return np.exp(-rho**2 / 4) if weighting == "amplitude" else np.exp(-rho**2 / 2)


@lru_cache(maxsize=64)
def _coupling_cached(m, n_max, R, density, weighting, n_quad):
    basis = build_basis(m, n_max, R)
    rho, w = radial_quadrature(basis, n_quad)
    U = basis.radial(rho)
    B = (U * (2 * np.pi * rho * w * _weight(rho, density, weighting))) @ U.T
    B = 0.5 * (B + B.T)
    B.setflags(write=False)
    return B


def coupling_matrix(basis: TransverseBasis, params: EnsembleParams, check: bool = True) -> CouplingMatrix:
    """Overlap B_nn' = int u_n u_n' w(rho) d^2r over the disc for one m block.

    The radial integral uses Gauss-Legendre panels; with ``check`` the result
    is compared with a finer rule and a :class:`CouplingError` carries the
    residual if the two differ by more than 1e-10.
    """
    key = (abs(basis.m), basis.n_max, basis.R, params.density, params.weighting)
    if params.density is Density.UNIFORM:
        # orthonormality on the disc makes B the identity
        return CouplingMatrix(basis.m, np.eye(basis.n_max))
    B = _coupling_cached(*key, 16)
    if check:
        B2 = _coupling_cached(*key, 24)
        resid = float(np.max(np.abs(B - B2)))
        if resid > 1e-10:
            raise CouplingError(f"coupling quadrature residual {resid:.2e} exceeds 1e-10")
    return CouplingMatrix(basis.m, np.array(B))


def diffraction_rates(basis: TransverseBasis, F: float) -> np.ndarray:
    """Diagonal diffraction term k_perp^2 / (4 pi F) in ensemble-length units."""
    return basis.k_perp**2 / (4 * np.pi * F)


@dataclass(frozen=True)
class Medium:
    """Everything the propagators need: basis, coupling block and parameters."""

    basis: TransverseBasis
    coupling: CouplingMatrix
    params: EnsembleParams

    @property
    def B(self) -> np.ndarray:
        return self.coupling.B

    @property
    def n(self) -> int:
        return self.basis.n_max

    @property
    def kappa(self) -> np.ndarray:
        return diffraction_rates(self.basis, self.params.F)

    def with_params(self, **changes) -> "Medium":
        """Same basis with new parameters; B is rebuilt if the profile changes."""
        from dataclasses import replace
        params = replace(self.params, **changes)
        coupling = self.coupling
        if (params.density, params.weighting) != (self.params.density, self.params.weighting):
            coupling = coupling_matrix(self.basis, params)
        return Medium(self.basis, coupling, params)


def build_medium(params: EnsembleParams, m: int = 0, n_max: int = 8,
                 R: float = DEFAULT_RADIUS) -> Medium:
    basis = build_basis(m, n_max, R)
    return Medium(basis, coupling_matrix(basis, params), params)
