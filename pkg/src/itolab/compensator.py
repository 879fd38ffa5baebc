"""Compensated wave field: the momentum amplitudes with the free phase removed."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ProbeError


@dataclass(frozen=True)
class ProbeSpec:
    """Base mode ``xi`` plus integer offsets ``m_j``; ``eta_j = m_j dk / eps^2``.

    ``xi_mode`` and each entry of ``eta_modes`` are signed integer mode
    vectors of length ``d`` (plain integers are accepted in d=1).
    """

    xi_mode: tuple
    eta_modes: tuple = ((0,),)
    times: tuple = (1.0,)
    label: str = field(default="", compare=False)

    def __post_init__(self):
        xi = tuple(int(v) for v in np.atleast_1d(self.xi_mode))
        etas = tuple(tuple(int(v) for v in np.atleast_1d(m)) for m in self.eta_modes)
        if any(len(m) != len(xi) for m in etas):
            raise ProbeError("eta offsets and xi must have the same dimension")
        times = tuple(sorted(float(t) for t in self.times))
        if not etas:
            raise ProbeError("at least one eta offset is required")
        object.__setattr__(self, "xi_mode", xi)
        object.__setattr__(self, "eta_modes", etas)
        object.__setattr__(self, "times", times)

    @property
    def n_eta(self) -> int:
        return len(self.eta_modes)

    def modes(self) -> np.ndarray:
        """Signed lattice modes ``xi + m_j``, shape ``(J, d)``."""
        return np.asarray(self.xi_mode)[None, :] + np.asarray(self.eta_modes)

    def xi(self, grid) -> np.ndarray:
        return grid.momentum(self.xi_mode)

    def eta(self, grid) -> np.ndarray:
        """Realized offset frequencies ``eta_j``, shape ``(J, d)``."""
        return np.asarray(self.eta_modes, dtype=float) * grid.dk / grid.eps**2

    def indices(self, grid) -> tuple:
        """Flat-array index tuple (one array per axis) of the probed modes."""
        if len(self.xi_mode) != grid.dimension:
            raise ProbeError("probe dimension differs from the grid dimension")
        idx = [grid.mode_index(m) for m in self.modes()]
        return tuple(np.array(col) for col in zip(*idx))

    def validate(self, grid):
        self.indices(grid)
        for t in self.times:
            if grid.scaling == "physical":
                grid.time_index(t / grid.time_scale)
            else:
                grid.time_index(t)


def compensate(field, probe: ProbeSpec, grid, check_time: bool = True) -> np.ndarray:
    """Values ``X(t, eta_j) = phihat(t, k_j) exp(i t |k_j|^2 / (2 eps^2))``.

    ``t`` is the scaled time; the ``exp(+-R(0) t / 2)`` factors relating the
    interaction-picture field to ``X`` cancel and do not appear. Leading axes of
    ``field.values`` (replicas) are preserved; the last axis indexes ``eta_j``.
    """
    t = field.time * grid.time_scale
    if check_time and not any(abs(t - s) <= 1e-9 * max(1.0, s) for s in probe.times):
        raise ProbeError(f"field time {t} is not one of the probe times {probe.times}")
    idx = probe.indices(grid)
    k = probe.modes() * grid.dk
    ksq = np.sum(k**2, axis=-1)
    values = field.values[(Ellipsis,) + idx]
    return values * np.exp(1j * t * ksq / (2 * grid.eps**2))
