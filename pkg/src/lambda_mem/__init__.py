"""Optimal storage and retrieval of light in a three-dimensional Lambda-type
atomic ensemble, in a Bessel-mode transverse basis."""

from .bessel_basis import ModeIndex, TransverseBasis, bessel_zero, bessel_zeros, build_basis, mode_function
from .ensemble import Density, EnsembleParams, Medium, build_medium, coupling_matrix, diffraction_rates
from .fields import LightMode, SpinWave
from .memory_opt import (Direction, KernelSpec, Picture, auto_grid, build_backward_kernel,
                         build_forward_kernel, build_kernel, build_storage_kernel, optimize_memory)
from .retrieval_opt import (OptimizationResult, build_retrieval_kernel, optimize_retrieval,
                            optimize_retrieval_freq, retrieval_u, solve_sylvester)

__version__ = "0.1.0"

__all__ = [
    "Density",
    "Direction",
    "EnsembleParams",
    "KernelSpec",
    "LightMode",
    "Medium",
    "ModeIndex",
    "OptimizationResult",
    "Picture",
    "SpinWave",
    "TransverseBasis",
    "__version__",
    "auto_grid",
    "bessel_zero",
    "bessel_zeros",
    "build_backward_kernel",
    "build_basis",
    "build_forward_kernel",
    "build_kernel",
    "build_medium",
    "build_retrieval_kernel",
    "build_storage_kernel",
    "coupling_matrix",
    "diffraction_rates",
    "mode_function",
    "optimize_memory",
    "optimize_retrieval",
    "optimize_retrieval_freq",
    "retrieval_u",
    "solve_sylvester",
]
