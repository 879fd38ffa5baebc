"""Split-step spectral solver for the Ito-Schroedinger equation on a periodic box.

Each step is a Strang splitting: half free flight in momentum space, an exactly
unitary noise kick ``exp(-i dB(x))`` on the physical lattice (the Stratonovich
product, which carries the Ito correction ``-R(0)/2`` implicitly), and a second
half free flight.

Along every trajectory the solver also accumulates the quadratic variations of
the martingale ``M(t, xi) = psihat(t, xi) - phihat_0(xi)`` with a left-point
rule, where ``psihat(t, k) = phihat(t, k) exp((i |k|^2 / eps^2 + R(0)) t / 2)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .compensator import ProbeSpec, compensate
from .correlation import CorrelationModel, mode_weights
from .exceptions import ConfigError
from .initial import GaussianBump, TabulatedInitial
from .lattice import GridSpec

# Modes whose weight is below this fraction of the largest one carry no noise.
WEIGHT_CUTOFF = 1e-20
NOISE_CHUNK = 32


@dataclass
class WaveField:
    """Fourier coefficients ``phihat(t, k)`` in FFT order; leading axes are replicas."""

    values: np.ndarray
    time: float = 0.0


class NoiseStream:
    """Per-replica counter-based random stream keyed by ``(base_seed, replica_id)``.

    Normals are consumed strictly in order, so a trajectory does not depend on
    how replicas are batched or how many draws are requested at once.
    """

    def __init__(self, base_seed: int, replica_id: int):
        self.base_seed = int(base_seed)
        self.replica_id = int(replica_id)
        seq = np.random.SeedSequence(self.base_seed, spawn_key=(self.replica_id,))
        self._rng = np.random.Generator(np.random.Philox(seq))
        self.step = 0
        self._pending = None

    def normals(self, n_pairs: int, n_modes: int) -> np.ndarray:
        return self._rng.standard_normal((n_pairs, 2, n_modes))


class NoiseSynthesizer:
    """Spectral synthesis of increments with ``E[dB(x) dB(y)] = dt R_per(x - y)``.

    A complex Gaussian spectrum with Hermitian-free i.i.d. coefficients yields a
    complex field whose real and imaginary parts are two independent increments
    with the required covariance (the weights are even in ``k``), so one inverse
    FFT serves two consecutive steps.
    """

    def __init__(self, grid: GridSpec, weights: np.ndarray):
        self.grid = grid
        w = np.asarray(weights, dtype=float)
        mask = w > WEIGHT_CUTOFF * w.max() if w.max() > 0 else np.zeros(w.shape, bool)
        # Drop the unpaired Nyquist planes so the retained set is symmetric.
        ny = grid.modes // 2
        for ax in range(grid.dimension):
            sl = [slice(None)] * grid.dimension
            sl[ax] = ny
            mask[tuple(sl)] = False
        self.support = np.flatnonzero(mask.ravel())
        # Physical increments carry the coupling eps; variance eps^2 dt R.
        var = grid.coupling**2 * grid.dt * w.ravel()[self.support]
        self.amplitude = np.sqrt(var) * grid.modes**grid.dimension
        self.n_modes = self.support.size

    def fields(self, normals: np.ndarray) -> np.ndarray:
        """Complex fields for ``normals`` of shape ``(..., 2, n_modes)``."""
        lead = normals.shape[:-2]
        n = self.grid.modes**self.grid.dimension
        spec = np.zeros(lead + (n,), dtype=complex)
        spec[..., self.support] = self.amplitude * (normals[..., 0, :] + 1j * normals[..., 1, :])
        spec = spec.reshape(lead + self.grid.shape)
        axes = tuple(range(-self.grid.dimension, 0))
        return np.fft.ifftn(spec, axes=axes)


def initial_values(grid: GridSpec, initial) -> np.ndarray:
    if isinstance(initial, TabulatedInitial):
        values = np.asarray(initial.values, dtype=complex)
        if values.shape != grid.shape:
            raise ConfigError(f"tabulated initial data has shape {values.shape}, lattice is {grid.shape}")
        return values.copy()
    if isinstance(initial, GaussianBump):
        if initial.dimension != grid.dimension:
            raise ConfigError("initial data and grid dimensions differ")
        k_max = (grid.modes // 2 - 1) * grid.dk
        if initial.effective_radius(1e-8) > k_max:
            raise ConfigError(f"initial bump extends beyond the lattice (|k| <= {k_max:.3g}); "
                              "increase grid.N or grid.L")
        k = np.moveaxis(grid.wavevectors, 0, -1)
        return np.asarray(initial(k), dtype=complex)
    raise ConfigError(f"unsupported initial data {type(initial).__name__}")


def init_field(grid: GridSpec, initial) -> WaveField:
    return WaveField(initial_values(grid, initial), 0.0)


def l2_norm(field, grid: GridSpec | None = None, cell_volume: float | None = None):
    """``(dk^d sum_k |phihat(k)|^2)^(1/2)``, per replica when leading axes exist."""
    values = field.values if isinstance(field, WaveField) else np.asarray(field)
    if cell_volume is None:
        if grid is None:
            raise ValueError("l2_norm needs the grid or the cell volume")
        cell_volume = grid.cell_volume
    d = grid.dimension if grid is not None else values.ndim
    axes = tuple(range(-d, 0))
    return np.sqrt(cell_volume * np.sum(np.abs(values) ** 2, axis=axes))


def sample_noise_increment(stream: NoiseStream, grid: GridSpec, weights) -> np.ndarray:
    """Next real increment ``dB`` on the physical lattice for this stream."""
    if stream._pending is not None:
        out, stream._pending = stream._pending, None
        stream.step += 1
        return out
    synth = NoiseSynthesizer(grid, weights)
    z = synth.fields(stream.normals(1, synth.n_modes)[0])
    stream._pending = z.imag.copy()
    stream.step += 1
    return z.real.copy()


def free_phase(grid: GridSpec, tau: float) -> np.ndarray:
    return np.exp(-1j * grid.dispersion * grid.ksq * tau)


def kick(values: np.ndarray, dB: np.ndarray, grid: GridSpec) -> np.ndarray:
    axes = tuple(range(-grid.dimension, 0))
    u = np.fft.ifftn(values, axes=axes)
    u *= np.exp(-1j * dB)
    return np.fft.fftn(u, axes=axes)


def step(field: WaveField, grid: GridSpec, stream: NoiseStream, weights=None,
         model: CorrelationModel | None = None, dB: np.ndarray | None = None) -> WaveField:
    """Advance one Strang step. ``dB`` may be supplied to freeze the noise."""
    if field.time + grid.dt > grid.horizon * (1 + 1e-12):
        raise ValueError("step would advance past the horizon")
    if dB is None:
        if weights is None:
            weights = mode_weights(model, grid)
        dB = sample_noise_increment(stream, grid, weights)
    half = free_phase(grid, grid.dt / 2)
    values = kick(field.values * half, dB, grid) * half
    return WaveField(values, field.time + grid.dt)


@dataclass
class MartingaleTracker:
    """Running ``Q = <M, M*>`` and ``scriptQ = <M, M>`` at one base mode."""

    Q: np.ndarray
    scriptQ: np.ndarray
    snapshots: list = field(default_factory=list)


class _ProbeKernel:
    """Precomputed gather indices for the quadratic-variation integrands at ``xi``."""

    def __init__(self, grid: GridSpec, weights: np.ndarray, probe: ProbeSpec):
        d, n = grid.dimension, grid.modes
        w = np.asarray(weights)
        sup = np.argwhere(w > WEIGHT_CUTOFF * w.max()) if w.max() > 0 else np.zeros((0, d), int)
        half = n // 2
        p = np.where(sup >= half, sup - n, sup)  # signed modes
        xi = np.asarray(probe.xi_mode)
        lo, hi = xi - p, xi + p
        inside = np.all((lo >= -half) & (lo < half) & (hi >= -half) & (hi < half), axis=1)
        p, lo, hi = p[inside], lo[inside], hi[inside]
        self.w = w[tuple(sup[inside].T)]
        self.idx_minus = np.ravel_multi_index(tuple((lo % n).T), grid.shape)
        self.idx_plus = np.ravel_multi_index(tuple((hi % n).T), grid.shape)
        self.xi_sq = float(np.sum((xi * grid.dk) ** 2))

    def integrands(self, flat: np.ndarray, s: float, r0: float, eps: float):
        """``Q`` and ``scriptQ`` integrands at scaled time ``s`` for flat fields.

        Uses ``|xi - p|^2 + |xi + p|^2 = 2|xi|^2 + 2|p|^2`` so the phase
        ``exp(-i s |p|^2 / eps^2)`` combines with the interaction-picture phases
        into ``exp(i s |xi|^2 / eps^2)``.
        """
        a = flat[:, self.idx_minus]
        growth = math.exp(r0 * s)
        q = growth * ((a.real**2 + a.imag**2) @ self.w)
        g = (a * flat[:, self.idx_plus]) @ self.w
        sq = -growth * np.exp(1j * self.xi_sq * s / eps**2) * g
        return q, sq


@dataclass
class EnsembleResult:
    """Probe output of a block of trajectories.

    ``X[name]`` has shape ``(M, n_times, n_eta)``; ``Q`` and ``scriptQ`` have
    shape ``(M, n_times)``; ``norm_drift`` is the largest relative deviation of
    the L2 norm over all steps of each trajectory.
    """

    grid: GridSpec
    probes: tuple
    replicas: np.ndarray
    X: dict
    Q: dict
    scriptQ: dict
    norm0: np.ndarray
    norm_drift: np.ndarray
    base_seed: int = 0

    @staticmethod
    def concatenate(parts):
        first = parts[0]
        cat = lambda key: {p.label: np.concatenate([getattr(r, key)[p.label] for r in parts])
                           for p in first.probes}
        return EnsembleResult(
            grid=first.grid, probes=first.probes,
            replicas=np.concatenate([r.replicas for r in parts]),
            X=cat("X"), Q=cat("Q"), scriptQ=cat("scriptQ"),
            norm0=np.concatenate([r.norm0 for r in parts]),
            norm_drift=np.concatenate([r.norm_drift for r in parts]),
            base_seed=first.base_seed)


def _label_probes(probes):
    out = []
    for i, p in enumerate(probes):
        if not p.label:
            p = ProbeSpec(p.xi_mode, p.eta_modes, p.times, label=f"probe{i}")
        out.append(p)
    return tuple(out)


def _simulate_block(grid, model, phi0, probes, base_seed, replica_ids):
    weights = mode_weights(model, grid)
    synth = NoiseSynthesizer(grid, weights)
    streams = [NoiseStream(base_seed, r) for r in replica_ids]
    B, n_steps = len(replica_ids), grid.n_steps
    axes = tuple(range(-grid.dimension, 0))
    cell = grid.cell_volume
    r0, eps, ts = model.r0, grid.eps, grid.time_scale

    values = np.broadcast_to(phi0, (B,) + grid.shape).astype(complex)
    norm0 = np.sqrt(cell * np.sum(np.abs(values) ** 2, axis=axes))
    safe0 = np.where(norm0 > 0, norm0, 1.0)
    drift = np.zeros(B)
    half = free_phase(grid, grid.dt / 2)

    kernels = [_ProbeKernel(grid, weights, p) for p in probes]
    rec_index = {p.label: {int(round(t / ts / grid.dt)): i for i, t in enumerate(p.times)}
                 for p in probes}
    X = {p.label: np.zeros((B, len(p.times), p.n_eta), complex) for p in probes}
    Q = {p.label: np.zeros((B, len(p.times))) for p in probes}
    SQ = {p.label: np.zeros((B, len(p.times)), complex) for p in probes}
    q_run = [np.zeros(B) for _ in probes]
    sq_run = [np.zeros(B, complex) for _ in probes]

    buf, buf_pos = None, NOISE_CHUNK
    pending = None
    for n in range(n_steps + 1):
        t_grid = n * grid.dt
        s = t_grid * ts
        field = WaveField(values, t_grid)
        for j, p in enumerate(probes):
            i = rec_index[p.label].get(n)
            if i is not None:
                X[p.label][:, i] = compensate(field, p, grid, check_time=False)
                Q[p.label][:, i] = q_run[j]
                SQ[p.label][:, i] = sq_run[j]
        if n == n_steps:
            break
        flat = values.reshape(B, -1)
        for j, kern in enumerate(kernels):
            q, sq = kern.integrands(flat, s, r0, eps)
            q_run[j] += grid.dt * ts * q
            sq_run[j] += grid.dt * ts * sq
        if pending is None:
            if buf_pos == NOISE_CHUNK:
                buf = np.stack([st.normals(NOISE_CHUNK, synth.n_modes) for st in streams])
                buf_pos = 0
            z = synth.fields(buf[:, buf_pos])
            buf_pos += 1
            dB, pending = z.real, z.imag
        else:
            dB, pending = pending, None
        values = values * half
        values = np.fft.ifftn(values, axes=axes)
        values *= np.exp(-1j * dB)
        values = np.fft.fftn(values, axes=axes)
        values *= half
        norm = np.sqrt(cell * np.sum(values.real**2 + values.imag**2, axis=axes))
        np.maximum(drift, np.abs(norm - norm0) / safe0, out=drift)

    return EnsembleResult(grid=grid, probes=probes, replicas=np.asarray(replica_ids),
                          X=X, Q=Q, scriptQ=SQ, norm0=norm0, norm_drift=drift,
                          base_seed=base_seed)


def run_ensemble(grid: GridSpec, model: CorrelationModel, initial, probes, base_seed: int,
                 replicas, block_size: int = 500, workers: int = 1) -> EnsembleResult:
    """Simulate independent trajectories ``replicas`` (ids or a count).

    Replicas are split into blocks that may run in separate processes; blocks
    are merged in replica order, so the result does not depend on
    ``block_size`` or ``workers``.
    """
    if np.isscalar(replicas):
        replicas = np.arange(int(replicas))
    replicas = np.asarray(replicas, dtype=int)
    probes = _label_probes(probes)
    for p in probes:
        p.validate(grid)
    phi0 = initial_values(grid, initial)
    blocks = [replicas[i:i + block_size] for i in range(0, len(replicas), block_size)]
    args = [(grid, model, phi0, probes, base_seed, b) for b in blocks]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_block, *zip(*args)))
    else:
        parts = [_simulate_block(*a) for a in args]
    return EnsembleResult.concatenate(parts)


def run_trajectory(grid: GridSpec, model: CorrelationModel, initial, stream: NoiseStream,
                   probes: ProbeSpec):
    """One trajectory: compensated probe values and its martingale tracker."""
    res = run_ensemble(grid, model, initial, [probes], stream.base_seed, [stream.replica_id])
    label = res.probes[0].label
    tracker = MartingaleTracker(Q=res.Q[label][0], scriptQ=res.scriptQ[label][0])
    return res.X[label][0], tracker


def q_pathwise_bound(model: CorrelationModel, norm0_sq: float, t: float) -> float:
    """Upper bound on ``Q(t)`` from ``Rhat <= ||R||_1``, norm conservation and Plancherel.

    ``||R||_1 (2 pi)^-d ||phihat_0||^2 int_0^t exp(R(0) s) ds``.
    """
    r0 = model.r0
    growth = (math.expm1(r0 * t) / r0) if r0 > 0 else t
    return model.l1_norm / (2 * math.pi) ** model.dimension * norm0_sq * growth


def q_stated_bound(model: CorrelationModel, norm0_sq: float, t: float) -> float:
    """The looser form ``||R||_1 / ||Rhat||_1 e^{R(0) t} ||phihat_0||^2``.

    Since ``||Rhat||_1 = (2 pi)^d R(0)`` this follows from ``q_pathwise_bound``
    via ``int_0^t e^{R(0) s} ds <= e^{R(0) t} / R(0)``.
    """
    if model.r0 == 0:
        return 0.0
    rhat_l1 = (2 * math.pi) ** model.dimension * model.r0
    return model.l1_norm / rhat_l1 * math.exp(model.r0 * t) * norm0_sq
