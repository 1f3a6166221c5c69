"""Sampled spin waves and light modes over (radial mode, grid point)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LightMode", "SpinWave"]


@dataclass
class _Sampled:
    values: np.ndarray = field(repr=False)   # (n_modes, n_points), complex
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    m: int = 0

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=complex))
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.values.shape[1] != len(self.points) or len(self.points) != len(self.weights):
            raise ValueError("values must have shape (n_modes, len(points)) matching the weights")

    @property
    def n_modes(self) -> int:
        return self.values.shape[0]

    def norm2(self) -> float:
        return float(np.sum(self.weights * np.abs(self.values) ** 2))

    def inner(self, other) -> complex:
        """<self|other> with the shared quadrature weights."""
        if not (len(self.points) == len(other.points) and np.allclose(self.points, other.points)):
            raise ValueError("inner product needs matching grids")
        return complex(np.sum(self.weights * np.conj(self.values) * other.values))

    def normalized(self):
        nrm = np.sqrt(self.norm2())
        if nrm == 0:
            raise ValueError("cannot normalize a zero field")
        return self._replace(self.values / nrm)

    def weighted(self) -> np.ndarray:
        """Samples times sqrt(weight): Euclidean geometry equals the L2 one."""
        return self.values * np.sqrt(self.weights)[None, :]

    def _replace(self, values):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw["values"] = values
        return type(self)(**kw)


@dataclass
class SpinWave(_Sampled):
    """S_n(z) on axial nodes in [0, 1]."""


@dataclass
class LightMode(_Sampled):
    """a_n on a time grid (``domain="time"``) or on frequency nodes nu
    (``domain="freq"``, samples of the transform int exp(-i nu t) a(t) dt
    with weights w_nu / 2 pi)."""

    domain: str = "time"

    def __post_init__(self):
        super().__post_init__()
        if self.domain not in ("time", "freq"):
            raise ValueError("domain must be 'time' or 'freq'")
