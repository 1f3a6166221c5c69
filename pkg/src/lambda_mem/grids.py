"""Quadrature grids shared by the kernel builders and the time-domain oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = ["FreqGrid", "TimeGrid", "UGrid", "ZGrid", "freq_grid", "time_grid", "u_grid", "z_grid"]


@dataclass(frozen=True)
class ZGrid:
    """Gauss-Legendre nodes on the ensemble length z in [0, 1]."""

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.points)

    def flip_permutation(self) -> np.ndarray:
        """Index map implementing z -> 1 - z (the nodes are symmetric)."""
        return np.arange(len(self.points))[::-1]


@dataclass(frozen=True)
class TimeGrid:
    """Gauss-Legendre nodes on a time window [start, start + length]."""

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class UGrid:
    """Uniform trapezoid grid for the inverse spatial Laplace transform.

    ``points`` are real, symmetric about zero and odd in number.  The
    integration contour is ``points - 1j * shift``; a positive shift moves it
    into the lower half plane, where every u-space amplitude is analytic, and
    suppresses aliasing of excitation that has travelled far beyond the
    ensemble.  ``shift = 0`` is the plain real-axis rule.
    """

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    shift: float = 0.0

    def __len__(self):
        return len(self.points)

    @property
    def contour(self) -> np.ndarray:
        return self.points - 1j * self.shift

    @property
    def u_max(self) -> float:
        return float(self.points[-1])


@dataclass(frozen=True)
class FreqGrid:
    """Nodes nu on the imaginary frequency axis (omega = i nu).

    Gauss-Legendre in theta with nu = scale * tan(theta), so the rule covers
    the whole real line; weights include the Jacobian.
    """

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    scale: float = 1.0

    def __len__(self):
        return len(self.points)


def z_grid(n: int = 40) -> ZGrid:
    x, w = leggauss(n)
    return ZGrid(0.5 * (x + 1), 0.5 * w)


def time_grid(n: int, length: float, start: float = 0.0) -> TimeGrid:
    x, w = leggauss(n)
    return TimeGrid(start + 0.5 * length * (x + 1), 0.5 * length * w)


def u_grid(u_max: float, n: int, shift: float = 0.0) -> UGrid:
    if n % 2 == 0:
        raise ValueError("N_u must be odd so that u = 0 is a node")
    u = np.linspace(-u_max, u_max, n)
    w = np.full(n, u[1] - u[0])
    w[[0, -1]] *= 0.5
    return UGrid(u, w, float(shift))


def freq_grid(n: int = 300, scale: float = 1.0) -> FreqGrid:
    x, w = leggauss(n)
    th = 0.5 * np.pi * x
    nu = scale * np.tan(th)
    return FreqGrid(nu, 0.5 * np.pi * w * scale / np.cos(th) ** 2, float(scale))
