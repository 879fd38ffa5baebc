"""Deterministic limit objects of the kinetic regime.

``w~(t, xi)`` solves the homogeneous linear Boltzmann equation

    d/dt w~ = (2 pi)^-d int Rhat(p) [w~(t, xi - p) - w~(t, xi)] dp,  w~(0) = |phihat_0|^2

and is computed three ways (jump-process Monte Carlo, truncated Duhamel series,
grid time stepping). The series sampler also provides ``fhat``, ``Uhat`` and
the density ``U`` used by the Ornstein-Uhlenbeck limit.

The Duhamel samples are stored independently of ``t``: for order ``n`` we keep
``S_n = p_1 + ... + p_n`` and ``A_n = sum_l p_l u_l`` with ``p_l`` drawn from
``Rhat / ((2 pi)^d R(0))`` and ``u`` sorted uniforms on ``[0, 1]``, so that the
simplex times are ``s_l = t u_l``. Then

    fhat(t, eta, xi) = e^{-R(0) t} sum_n (R(0) t)^n / n! E[e^{i t eta.A_n} |phihat_0(xi - S_n)|^2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, special, stats

from .correlation import CorrelationModel
from .exceptions import NegativeVariance, SingularTime, StabilityError, TailError

MAX_ORDER_CEILING = 200
CHUNK_ELEMENTS = 2_000_000


@dataclass
class KineticSolution:
    """``w~`` at ``times`` x ``xi`` (shape ``(n_t, n_xi)``) with error estimates."""

    method: str
    times: np.ndarray
    xi: np.ndarray
    wtilde: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def value(self, t, xi_index=0) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not in solution")
        return float(self.wtilde[i, xi_index])


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation and sampling parameters of the Duhamel series.

    ``max_order=None`` picks the smallest order whose factorial tail
    ``P(Poisson(R(0) t) > N)`` is below ``tail_tol``.
    """

    max_order: int | None = None
    samples: int = 200_000
    tail_tol: float = 1e-6
    seed: int = 0


def _as_points(xi, d):
    xi = np.asarray(xi, dtype=float)
    if d == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    return np.atleast_2d(xi.reshape(-1, d))


def tail_probability(rate_t: float, order: int) -> float:
    """``e^{-x} sum_{n > N} x^n / n!`` for ``x = R(0) t``."""
    return float(stats.poisson.sf(order, rate_t))


def required_order(rate_t: float, tail_tol: float) -> int:
    for n in range(MAX_ORDER_CEILING + 1):
        if tail_probability(rate_t, n) < tail_tol:
            return n
    raise TailError(f"no order <= {MAX_ORDER_CEILING} meets tail tolerance {tail_tol:g} "
                    f"at R(0)t = {rate_t:g}")


class DuhamelSeries:
    """Shared Monte-Carlo samples for all series evaluators.

    One instance serves every ``(t, eta, xi)`` query up to ``t_max``; sharing
    the samples makes ``fhat(t, 0, xi)`` identical to ``wtilde`` and makes the
    Toeplitz matrices ``[Uhat(s, eta_j - eta_k)]`` positive semidefinite.
    """

    def __init__(self, model: CorrelationModel, initial, t_max: float,
                 cfg: SeriesConfig = SeriesConfig()):
        self.model, self.initial, self.cfg = model, initial, cfg
        self.t_max = float(t_max)
        rate_t = model.r0 * self.t_max
        needed = required_order(rate_t, cfg.tail_tol)
        if cfg.max_order is None:
            self.order = needed
        else:
            if cfg.max_order < needed:
                raise TailError(f"max_order={cfg.max_order} leaves a tail of "
                                f"{tail_probability(rate_t, cfg.max_order):.2e} > {cfg.tail_tol:g}")
            self.order = int(cfg.max_order)
        d, M = model.dimension, int(cfg.samples)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        self.S = [np.zeros((M, d))]
        self.A = [np.zeros((M, d))]
        for n in range(1, self.order + 1):
            jumps = model.sample_jumps(rng, (M, n))
            u = np.sort(rng.random((M, n)), axis=1)[:, ::-1]  # s_1 > ... > s_n
            self.S.append(jumps.sum(axis=1))
            self.A.append(np.einsum("mn,mnd->md", u, jumps))
        # Extra jump for the outer convolution in Uhat.
        self.p0 = [model.sample_jumps(rng, M) for _ in range(self.order + 1)]

    def tail_bound(self, t: float) -> float:
        """Certified absolute truncation error, ``sup|phihat_0|^2 P(Poisson > N)``."""
        return self.initial.sup_sq() * tail_probability(self.model.r0 * t, self.order)

    def _coefficients(self, t):
        x = self.model.r0 * t
        n = np.arange(self.order + 1)
        return math.exp(-x) * np.exp(n * math.log(x) - special.gammaln(n + 1)) if x > 0 else \
            (n == 0).astype(float)

    def _check_t(self, t):
        if t < 0 or t > self.t_max * (1 + 1e-12):
            raise ValueError(f"t={t} outside the sampled range [0, {self.t_max}]")

    def _reduce(self, coeffs, term, pts):
        """Weighted sum over orders of sample means of ``term(n, pts)`` (shape (M, P)).

        Points are processed in chunks to bound memory. Returns the value and
        the Monte-Carlo standard error per point.
        """
        M = self.S[0].shape[0]
        chunk = max(1, CHUNK_ELEMENTS // M)
        value = np.zeros(len(pts), complex)
        var = np.zeros(len(pts))
        for lo in range(0, len(pts), chunk):
            sl = slice(lo, lo + chunk)
            for n, c in enumerate(coeffs):
                if c == 0:
                    continue
                z = term(n, pts[sl])
                mean = z.mean(axis=0)
                value[sl] += c * mean
                var[sl] += c**2 * (np.abs(z - mean) ** 2).sum(axis=0) / (M - 1)
        return value, np.sqrt(var / M)

    def fhat(self, t: float, eta, xi):
        """``fhat(t, eta, xi)`` with standard error; arrays over the points ``xi``.

        At ``eta = 0`` the n = 0 term is exactly ``|phihat_0(xi)|^2 e^{-R(0) t}``.
        The error includes the certified tail bound.
        """
        self._check_t(t)
        d = self.model.dimension
        eta = np.atleast_1d(np.asarray(eta, dtype=float)).reshape(d)

        def term(n, pts):
            amp = np.abs(self.initial(pts[None, :, :] - self.S[n][:, None, :])) ** 2
            if np.any(eta):
                amp = amp * np.exp(1j * t * (self.A[n] @ eta))[:, None]
            return amp

        value, se = self._reduce(self._coefficients(t), term, _as_points(xi, d))
        return value, se + self.tail_bound(t)

    def wtilde(self, t: float, xi):
        value, se = self.fhat(t, np.zeros(self.model.dimension), xi)
        return value.real, se

    def uhat(self, s: float, eta, xi):
        """``Uhat(s, eta, xi)`` with standard error (arrays over ``xi``)."""
        self._check_t(s)
        d = self.model.dimension
        eta = np.atleast_1d(np.asarray(eta, dtype=float)).reshape(d)

        def term(n, pts):
            shift = self.p0[n] + self.S[n]
            amp = np.abs(self.initial(pts[None, :, :] - shift[:, None, :])) ** 2
            if np.any(eta):
                amp = amp * np.exp(1j * s * ((self.p0[n] + self.A[n]) @ eta))[:, None]
            return amp

        coeffs = self.model.r0 * self._coefficients(s)
        value, se = self._reduce(coeffs, term, _as_points(xi, d))
        return value, se + self.model.r0 * self.tail_bound(s)

    def uhat_matrix(self, s: float, etas, xi) -> np.ndarray:
        """Hermitian matrix ``[Uhat(s, eta_j - eta_k, xi)]`` for a single ``xi``.

        Built as ``sum_samples c_n w e_j conj(e_k)`` with nonnegative weights, so
        it is positive semidefinite up to rounding.
        """
        d = self.model.dimension
        pt = _as_points(xi, d)[0]
        etas = np.asarray(etas, dtype=float).reshape(-1, d)
        coeffs = self.model.r0 * self._coefficients(s)
        M = self.p0[0].shape[0]
        out = np.zeros((len(etas), len(etas)), complex)
        for n in range(self.order + 1):
            if coeffs[n] == 0:
                continue
            shift = self.p0[n] + self.S[n]
            amp = np.abs(self.initial(pt[None, :] - shift)) ** 2
            e = np.exp(1j * s * ((self.p0[n] + self.A[n]) @ etas.T))  # (M, J)
            out += coeffs[n] / M * (e * amp[:, None]).T @ e.conj()
        return 0.5 * (out + out.conj().T)

    def u_density(self, t: float, x, xi, time_floor: float = 1e-2):
        """Density ``U(t, x, xi)`` of the measure ``u`` with standard error.

        Each order contributes ``(2 pi t)^-d E[Rhat(xi - (x + t A_n) / t)
        |phihat_0((x + t A_n) / t - S_n)|^2]``; the Fourier transform of
        ``y -> U(t, y + xi t, xi)`` reproduces ``uhat``.
        """
        if t < time_floor:
            raise SingularTime(f"t={t} below the time floor {time_floor}")
        self._check_t(t)
        d = self.model.dimension
        xs = _as_points(x, d)
        xi = _as_points(xi, d)[0]
        coeffs = self._coefficients(t) / (2 * math.pi * t) ** d

        def term(n, pts):
            v = pts[None, :, :] / t + self.A[n][:, None, :]  # (M, P, d)
            return self.model.Rhat(xi - v) * np.abs(self.initial(v - self.S[n][:, None, :])) ** 2

        value, se = self._reduce(coeffs, term, xs)
        return value.real, se


def _squeeze(value, se):
    return (value[0], se[0]) if value.size == 1 else (value, se)


def solve_wtilde_series(model: CorrelationModel, initial, t, xi_set,
                        cfg: SeriesConfig = SeriesConfig(), series: DuhamelSeries | None = None):
    times = np.atleast_1d(np.asarray(t, dtype=float))
    series = series or DuhamelSeries(model, initial, times.max(), cfg)
    pts = _as_points(xi_set, model.dimension)
    vals, errs = zip(*(series.wtilde(s, pts) for s in times))
    return KineticSolution("series", times, pts, np.array(vals), np.array(errs),
                           meta={"max_order": series.order, "samples": cfg.samples,
                                 "tail_bound": [series.tail_bound(s) for s in times]})


def fhat_series(model, initial, t, eta, xi, cfg: SeriesConfig = SeriesConfig(),
                series: DuhamelSeries | None = None):
    series = series or DuhamelSeries(model, initial, t, cfg)
    return _squeeze(*series.fhat(t, eta, xi))


def uhat(model, initial, s, eta, xi, cfg: SeriesConfig = SeriesConfig(),
         series: DuhamelSeries | None = None):
    series = series or DuhamelSeries(model, initial, max(s, 1e-12), cfg)
    return _squeeze(*series.uhat(s, eta, xi))


def u_density_series(model, initial, t, x, xi, cfg: SeriesConfig = SeriesConfig(),
                     series: DuhamelSeries | None = None, time_floor: float = 1e-2):
    if t < time_floor:
        raise SingularTime(f"t={t} below the time floor {time_floor}")
    series = series or DuhamelSeries(model, initial, t, cfg)
    return series.u_density(t, x, xi, time_floor=time_floor)


def solve_wtilde_mc(model: CorrelationModel, initial, t, xi_set, samples: int = 100_000,
                    seed: int = 0, block: int = 50_000):
    """Monte Carlo over the momentum jump process started at each ``xi``.

    Holding times are exponential with rate ``R(0)``; each jump moves the
    momentum by ``-p``. All times share the same paths.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    pts = _as_points(xi_set, model.dimension)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    t_max = times.max()
    d = model.dimension
    sums = np.zeros((len(times), len(pts)))
    sq = np.zeros_like(sums)
    done = 0
    while done < samples:
        m = min(block, samples - done)
        clock = np.zeros(m)
        position = np.zeros((m, d))
        disp = np.zeros((len(times), m, d))
        alive = np.ones(m, bool) if model.r0 > 0 else np.zeros(m, bool)
        while alive.any():
            idx = np.flatnonzero(alive)
            before = clock[idx]
            after = before + rng.exponential(1 / model.r0, idx.size)
            for i, s in enumerate(times):
                hit = idx[(before <= s) & (after > s)]
                disp[i, hit] = position[hit]
            clock[idx] = after
            jumpers = idx[after <= t_max]
            position[jumpers] -= model.sample_jumps(rng, jumpers.size)
            alive[idx[after > t_max]] = False
        for i in range(len(times)):
            vals = np.abs(initial(pts[None, :, :] + disp[i][:, None, :])) ** 2
            sums[i] += vals.sum(axis=0)
            sq[i] += (vals**2).sum(axis=0)
        done += m
    mean = sums / samples
    var = np.maximum(sq / samples - mean**2, 0) * samples / max(samples - 1, 1)
    return KineticSolution("mc", times, pts, mean, np.sqrt(var / samples),
                           meta={"samples": samples, "seed": seed})


def _periodic_grid(model, initial, n_points, half_width, t_max):
    if half_width is None:
        center = max(abs(c) for c in getattr(initial, "center", (0.0,)))
        width = getattr(initial, "width", 1.0)
        spread = model.jump_std() * math.sqrt(max(model.r0 * t_max, 0) + 1)
        half_width = center + 10 * width + 10 * spread
    h = 2 * half_width / n_points
    axis = (np.arange(n_points) - n_points // 2) * h
    return axis, h


def solve_wtilde_grid(model: CorrelationModel, initial, t_list, xi_set=None, n_points: int = 1024,
                      dt: float = 1e-3, half_width: float | None = None, mode: str = "expint",
                      error_estimate: bool = True):
    """Time stepping of the Boltzmann equation on a periodic momentum grid.

    The gain term is a circular convolution with the sampled kernel
    ``Rhat(p) h^d / (2 pi)^d`` computed by FFT; the loss rate is the discrete
    sum of that kernel, so total mass is conserved to rounding. ``mode`` is
    ``"expint"`` (exact in the loss term, explicit in the gain; positive for any
    ``dt``) or ``"euler"`` (forward Euler; requires ``dt R(0) <= 1``). With
    ``error_estimate`` a second run at ``dt / 2`` gives a Richardson-extrapolated
    value and the coarse/fine difference as its error bound. Values at ``xi_set`` are
    obtained by cubic interpolation.
    """
    times = np.atleast_1d(np.asarray(t_list, dtype=float))
    d = model.dimension
    if mode not in ("expint", "euler"):
        raise ValueError(f"unknown grid mode {mode!r}")
    if mode == "euler" and dt * model.r0 > 1:
        raise StabilityError(f"forward Euler needs dt*R(0) <= 1, got {dt * model.r0:g}")
    axis, h = _periodic_grid(model, initial, n_points, half_width, times.max())
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
    w0 = np.abs(initial(mesh)) ** 2
    kernel = np.fft.ifftshift(model.Rhat(mesh)) * (h / (2 * math.pi)) ** d
    kernel_hat = np.fft.fftn(kernel)
    rate = float(kernel.sum())

    def run(step):
        n_out = np.rint(times / step).astype(int)
        if np.any(np.abs(n_out * step - times) > 1e-9 * np.maximum(times, 1)):
            raise ValueError("requested times must be multiples of the kinetic dt")
        decay = math.exp(-rate * step)
        gain_w = (-math.expm1(-rate * step) / rate) if rate > 0 else step
        w = w0.copy()
        out = {}
        for n in range(n_out.max() + 1):
            if n in n_out:
                out[n] = w.copy()
            if n == n_out.max():
                break
            gain = np.fft.ifftn(np.fft.fftn(w) * kernel_hat).real
            if mode == "expint":
                w = decay * w + gain_w * gain
            else:
                w = w + step * (gain - rate * w)
        return [out[n] for n in n_out]

    fields = run(dt)
    if error_estimate:
        # Richardson step: the scheme is first order, so 2 * fine - coarse is
        # second order and |coarse - fine| bounds its error.
        fine = run(dt / 2)
        err_fields = [np.abs(a - b) for a, b in zip(fields, fine)]
        fields = [np.maximum(2 * b - a, 0.0) for a, b in zip(fields, fine)]
    else:
        err_fields = [np.zeros_like(f) for f in fields]
    mass = [float(f.sum() * h**d) for f in fields]
    if xi_set is None:
        pts = mesh.reshape(-1, d)
        vals = np.array([f.ravel() for f in fields])
        errs = np.array([e.ravel() for e in err_fields])
    else:
        pts = _as_points(xi_set, d)
        vals = np.array([_interp(axis, f, pts) for f in fields])
        # time-step error plus twice the cubic/quintic interpolation gap
        errs = np.array([np.abs(_interp(axis, e, pts)) + 2 * np.abs(v - _interp(axis, f, pts, 5))
                         for e, f, v in zip(err_fields, fields, vals)])
    return KineticSolution("grid", times, pts, vals, np.abs(errs),
                           meta={"n_points": n_points, "h": h, "dt": dt, "mode": mode,
                                 "mass": mass, "mass0": float(w0.sum() * h**d)})


def _interp(axis, values, pts, order=3):
    if values.ndim == 1:
        return interpolate.make_interp_spline(axis, values, k=order)(pts[:, 0])
    method = {3: "cubic", 5: "quintic"}[order]
    return interpolate.RegularGridInterpolator([axis] * values.ndim, values, method=method)(pts)


def sigma_sq(model: CorrelationModel, initial, t, xi, solution: KineticSolution | None = None,
             tol: float = 1e-8, **grid_kw):
    """``sigma^2 = (w~ - |phihat_0(xi)|^2 e^{-R(0) t}) / 2``, the per-component variance."""
    if solution is None:
        solution = solve_wtilde_grid(model, initial, [t], xi, **grid_kw)
    i = int(np.argmin(np.abs(solution.times - t)))
    pts = _as_points(xi, model.dimension)
    w = solution.wtilde[i]
    decay = np.abs(initial(pts)) ** 2 * math.exp(-model.r0 * t)
    s2 = 0.5 * (w - decay)
    if np.any(s2 < -tol - solution.stderr[i]):
        raise NegativeVariance(f"w~ falls below the decay term by {-s2.min():.3e}")
    s2 = np.maximum(s2, 0.0)
    return float(s2[0]) if s2.size == 1 else s2
