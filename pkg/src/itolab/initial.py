"""Initial data ``phihat_0`` given directly in momentum space."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True)
class GaussianBump:
    """``phihat_0(xi) = a exp(-|xi - center|^2 / (2 width^2))``."""

    amplitude: float = 1.0
    center: tuple = (0.0,)
    width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.width > 0:
            raise ConfigError("init.width must be positive")

    @property
    def dimension(self) -> int:
        return len(self.center)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        c = np.asarray(self.center)
        if self.dimension == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
            r2 = (xi - c[0]) ** 2
        else:
            r2 = np.sum((xi - c) ** 2, axis=-1)
        return self.amplitude * np.exp(-r2 / (2 * self.width**2))

    def l2_norm_sq(self) -> float:
        """``int |phihat_0|^2 dxi`` in closed form."""
        return self.amplitude**2 * (math.pi * self.width**2) ** (self.dimension / 2)

    def sup_sq(self) -> float:
        return self.amplitude**2

    def effective_radius(self, tol: float = 1e-8) -> float:
        """Distance from the center beyond which ``|phihat_0| < tol * a``."""
        return self.width * math.sqrt(2 * math.log(1 / tol)) + max(abs(c) for c in self.center)


@dataclass(frozen=True)
class TabulatedInitial:
    """Values on the solver lattice (FFT ordering); zero off the lattice."""

    values: np.ndarray
    dk: float

    @property
    def dimension(self) -> int:
        return self.values.ndim

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.dimension == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
            xi = xi[..., None]
        n = self.values.shape[0]
        idx = np.rint(xi / self.dk).astype(int)
        inside = np.all((idx >= -n // 2) & (idx < n // 2), axis=-1)
        out = np.zeros(xi.shape[:-1], dtype=self.values.dtype)
        sel = tuple(np.moveaxis(idx[inside] % n, -1, 0))
        out[inside] = self.values[sel]
        return out

    def l2_norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dk**self.dimension)

    def sup_sq(self) -> float:
        return float(np.max(np.abs(self.values)) ** 2) if self.values.size else 0.0
