"""Spatial covariance models of the random potential and derived spectral data.

Conventions: ``Rhat(p) = int R(x) exp(-i p.x) dx`` so that
``R(0) = (2 pi)^-d int Rhat(p) dp``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import AliasingWarning, ConfigError, TruncationError

FAMILIES = ("gaussian",)


@dataclass(frozen=True)
class CorrelationModel:
    """Isotropic covariance ``R`` of the potential, white in time."""

    dimension: int = 1
    amplitude: float = 1.0
    corr_length: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown corr.family {self.family!r}; expected one of {FAMILIES}")
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        if self.amplitude < 0:
            raise ConfigError("corr.amplitude must be nonnegative")
        if not self.corr_length > 0:
            raise ConfigError("corr.length must be positive")

    @property
    def r0(self) -> float:
        """``R(0)``, the total jump rate of the momentum process."""
        return float(self.amplitude)

    @property
    def l1_norm(self) -> float:
        """``||R||_{L^1}``; equals ``Rhat(0)`` because ``R >= 0``."""
        return self.amplitude * (2 * math.pi * self.corr_length**2) ** (self.dimension / 2)

    def R(self, x):
        """Covariance at spatial lag ``x`` (last axis of length d, or scalar in d=1)."""
        r2 = _sqnorm(x, self.dimension)
        return self.amplitude * np.exp(-r2 / (2 * self.corr_length**2))

    def Rhat(self, p):
        """Spectral density at momentum ``p``; closed form for the gaussian family."""
        p2 = _sqnorm(p, self.dimension)
        return self.l1_norm * np.exp(-(self.corr_length**2) * p2 / 2)

    def jump_std(self) -> float:
        """Per-axis standard deviation of the normalized jump density."""
        return 1.0 / self.corr_length

    def sample_jumps(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw momenta from ``Rhat(p) / ((2 pi)^d R(0))``; shape ``size + (d,)``."""
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(size + (self.dimension,)) * self.jump_std()

    def support_radius(self, n_sd: float = 8.0) -> float:
        return n_sd * self.jump_std()


def _sqnorm(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x**2
    return np.sum(x**2, axis=-1)


def eval_R(model: CorrelationModel, x):
    return model.R(x)


def eval_Rhat(model: CorrelationModel, p):
    return model.Rhat(p)


def diffusion_matrix(model: CorrelationModel, n_points: int = 257, n_sd: float = 8.0,
                     tail_tol: float = 1e-10) -> np.ndarray:
    """Diffusion matrix ``D = (2 pi)^-d int Rhat(p) p p^T dp`` by tensor quadrature.

    The domain is the cube of half-width ``n_sd`` jump standard deviations.
    Raises TruncationError when the spectral mass outside the cube, estimated
    as ``1 - quad(Rhat) / ((2 pi)^d R(0))``, exceeds ``tail_tol``.
    """
    d = model.dimension
    if model.r0 == 0:
        return np.zeros((d, d))
    radius = model.support_radius(n_sd)
    axis = np.linspace(-radius, radius, n_points)
    h = axis[1] - axis[0]
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
    density = model.Rhat(mesh) / (2 * math.pi) ** d
    w = np.full(n_points, h)
    w[[0, -1]] *= 0.5
    weights = density.copy()
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n_points
        weights = weights * w.reshape(shape)
    tail = 1.0 - weights.sum() / model.r0
    if tail > tail_tol:
        raise TruncationError(f"spectral tail mass {tail:.3e} exceeds {tail_tol:.1e}")
    flat_p = mesh.reshape(-1, d)
    D = np.einsum("n,ni,nj->ij", weights.ravel(), flat_p, flat_p)
    return 0.5 * (D + D.T)


def mode_weights(model: CorrelationModel, grid, alias_frac: float = 1e-8) -> np.ndarray:
    """Per-mode variances ``Rhat(k) (dk / 2 pi)^d`` on the lattice dual to the box.

    Their sum is the discrete ``R(0)``; a field synthesized with these weights
    has the periodized covariance ``sum_n R(x + n L)``.
    """
    if grid.dimension != model.dimension:
        raise ConfigError("grid and correlation model dimensions differ")
    rhat = model.Rhat(np.moveaxis(grid.wavevectors, 0, -1))
    nyquist = model.Rhat(np.full(model.dimension, grid.modes // 2 * grid.dk))
    if model.r0 > 0 and nyquist > alias_frac * model.Rhat(np.zeros(model.dimension)):
        warnings.warn(f"Rhat at the Nyquist mode is {nyquist:.3e}; increase grid.N or "
                      "decrease grid.L", AliasingWarning, stacklevel=2)
    return rhat * (grid.dk / (2 * math.pi)) ** model.dimension
