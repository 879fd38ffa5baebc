"""Periodic momentum lattice and time stepping parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ConfigError, ProbeError


@dataclass(frozen=True)
class GridSpec:
    """Discretization of ``[0, L)^d`` with ``N`` modes per axis.

    With ``scaling="scaled"`` (default) the free dispersion is
    ``|k|^2 / (2 eps^2)`` per unit time and the noise has unit strength. With
    ``scaling="physical"`` the dispersion is ``|k|^2 / 2`` and the noise has
    strength ``eps``; ``dt`` and ``horizon`` are then in unscaled time, which is
    ``1 / eps^2`` times longer. Lattice arrays use FFT ordering along each of
    the ``d`` trailing axes.
    """

    dimension: int = 1
    box_length: float = 40.0
    modes: int = 512
    dt: float = 1e-3
    eps: float = 0.5
    horizon: float = 1.0
    scaling: str = "scaled"

    def __post_init__(self):
        if self.scaling not in ("scaled", "physical"):
            raise ConfigError("scaling must be 'scaled' or 'physical'")
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        if self.modes < 4 or self.modes % 2:
            raise ConfigError("grid.N must be even and >= 4")
        if not self.box_length > 0:
            raise ConfigError("grid.L must be positive")
        if not self.dt > 0:
            raise ConfigError("grid.dt must be positive")
        if not 0 < self.eps <= 1:
            raise ConfigError("eps must lie in (0, 1]")
        if not self.horizon > 0:
            raise ConfigError("grid.T must be positive")
        ratio = self.horizon / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0):
            raise ConfigError("grid.T must be an integer multiple of grid.dt")

    @classmethod
    def with_auto_dt(cls, eps, *, k_active, probe_times=(), dimension=1,
                     box_length=40.0, modes=512, horizon=1.0, scaling="scaled"):
        """Grid whose step keeps the free phase per half step below pi/4.

        The phase bound is enforced for ``|k| <= k_active``; the step count is
        increased until every requested probe time (grid time units) is a
        multiple of ``dt``.
        """
        dispersion = 1 / (2 * eps**2) if scaling == "scaled" else 0.5
        dt_max = math.pi / (2 * dispersion * k_active**2)
        n = max(1, math.ceil(horizon / dt_max))
        for _ in range(100_000):
            if all(_is_multiple(t, horizon / n) for t in probe_times):
                break
            n += 1
        else:  # pragma: no cover
            raise ConfigError("cannot align probe times with an admissible dt")
        return cls(dimension=dimension, box_length=box_length, modes=modes,
                   dt=horizon / n, eps=eps, horizon=horizon, scaling=scaling)

    @property
    def dispersion(self) -> float:
        """Coefficient ``c`` of the free phase rate ``c |k|^2``."""
        return 1 / (2 * self.eps**2) if self.scaling == "scaled" else 0.5

    @property
    def coupling(self) -> float:
        return 1.0 if self.scaling == "scaled" else self.eps

    @property
    def time_scale(self) -> float:
        """Scaled time per unit of grid time."""
        return 1.0 if self.scaling == "scaled" else self.eps**2

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / self.box_length

    @property
    def dx(self) -> float:
        return self.box_length / self.modes

    @property
    def cell_volume(self) -> float:
        """Momentum cell volume ``dk^d``."""
        return self.dk**self.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes,) * self.dimension

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.modes, d=self.dx)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Array of shape ``(d, N, ..., N)`` with the lattice momenta."""
        axes = [self.axis_wavenumbers] * self.dimension
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def ksq(self) -> np.ndarray:
        return np.sum(self.wavevectors**2, axis=0)

    def mode_index(self, mode) -> tuple[int, ...]:
        """Array index of a signed integer mode vector."""
        mode = np.atleast_1d(np.asarray(mode, dtype=int))
        if mode.shape != (self.dimension,):
            raise ProbeError(f"mode {mode.tolist()} does not have dimension {self.dimension}")
        half = self.modes // 2
        if np.any(mode < -half) or np.any(mode >= half):
            raise ProbeError(f"mode {mode.tolist()} lies outside the lattice [-{half}, {half})")
        return tuple(int(m) % self.modes for m in mode)

    def snap(self, xi) -> np.ndarray:
        """Signed integer mode nearest to the momentum ``xi``."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return np.rint(xi / self.dk).astype(int)

    def momentum(self, mode) -> np.ndarray:
        return np.atleast_1d(np.asarray(mode, dtype=float)) * self.dk

    def time_index(self, t: float) -> int:
        if not _is_multiple(t, self.dt) or t < -1e-12 or t > self.horizon * (1 + 1e-12):
            raise ProbeError(f"time {t} is not a multiple of dt={self.dt} within [0, T]")
        return int(round(t / self.dt))


def _is_multiple(t, step):
    ratio = t / step
    return abs(ratio - round(ratio)) <= 1e-9 * max(abs(ratio), 1.0)
