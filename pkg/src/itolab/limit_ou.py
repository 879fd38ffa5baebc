"""Limiting Ornstein-Uhlenbeck field ``X_xi(t, eta)`` over a finite set of offsets.

``dX = -R(0) X dt / 2 + dB``, ``X(0) = phihat_0(xi)``, where ``B`` is a circular
complex Gaussian martingale with ``d<B_j, B_k^*> = Uhat(s, eta_j - eta_k, xi) ds``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CovarianceError
from .kinetic import DuhamelSeries

log = logging.getLogger(__name__)


@dataclass
class OUParams:
    """Reference law of the limit at base momentum ``xi`` and offsets ``etas`` (shape (J, d))."""

    xi: np.ndarray
    etas: np.ndarray
    times: tuple
    series: DuhamelSeries
    dt: float = 0.005
    psd_tol: float = 1e-6

    def __post_init__(self):
        d = self.series.model.dimension
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=float)).reshape(d)
        self.etas = np.asarray(self.etas, dtype=float).reshape(-1, d)
        self.times = tuple(sorted(float(t) for t in self.times))
        n = self.times[-1] / self.dt
        if abs(n - round(n)) > 1e-9 * max(n, 1):
            raise ValueError("ou.dt must divide the last output time")
        for t in self.times:
            r = t / self.dt
            if abs(r - round(r)) > 1e-9 * max(r, 1):
                raise ValueError(f"output time {t} is not a multiple of ou.dt")

    @property
    def r0(self) -> float:
        return self.series.model.r0

    @property
    def phi0(self) -> complex:
        return complex(np.asarray(self.series.initial(self.xi[None, :])).ravel()[0])


@dataclass
class OUPath:
    """Sampled values ``X(t_i, eta_j)``, shape ``(M, n_times, J)``."""

    values: np.ndarray
    times: tuple
    seed: int
    Q: np.ndarray = None
    psd_defects: list = field(default_factory=list)


def psd_factor(C: np.ndarray, tol: float):
    """Square-root factor of a Hermitian matrix after clipping negative eigenvalues.

    Returns ``(L, defect)`` with ``L L^H`` the repaired matrix and ``defect`` the
    most negative eigenvalue relative to the trace. Raises CovarianceError when
    the defect exceeds ``tol``.
    """
    C = 0.5 * (C + C.conj().T)
    lam, V = np.linalg.eigh(C)
    scale = max(float(np.real(np.trace(C))), np.finfo(float).tiny)
    defect = max(0.0, -float(lam.min()) / scale)
    if defect > tol:
        raise CovarianceError(f"increment covariance has PSD defect {defect:.3e} > {tol:g}")
    if defect > 0:
        log.debug("clipped eigenvalue %.3e (relative defect %.3e)", lam.min(), defect)
    return V * np.sqrt(np.clip(lam, 0, None)), defect


def sample_ou_paths(params: OUParams, replicas: int, seed: int) -> OUPath:
    """Euler scheme ``X <- X - R(0) X dt / 2 + dB`` with left-endpoint covariance.

    The increment over ``[s, s + dt]`` is a circular complex Gaussian vector with
    covariance ``dt [Uhat(s, eta_j - eta_k, xi)]``. Also returns the
    deterministic quadratic variation ``Q(t) = sum e^{R(0) s} Uhat(s, 0, xi) dt``
    of ``Y = e^{R(0) t / 2} X - phihat_0(xi)``.
    """
    p = params
    J = len(p.etas)
    n_steps = int(round(p.times[-1] / p.dt))
    record = {int(round(t / p.dt)): i for i, t in enumerate(p.times)}
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    X = np.full((replicas, J), p.phi0, dtype=complex)
    out = np.zeros((replicas, len(p.times), J), complex)
    Q = np.zeros(len(p.times))
    q = 0.0
    defects = []
    for n in range(n_steps + 1):
        if n in record:
            out[:, record[n]] = X
            Q[record[n]] = q
        if n == n_steps:
            break
        s = n * p.dt
        U = p.series.uhat_matrix(s, p.etas, p.xi)
        L, defect = psd_factor(p.dt * U, p.psd_tol)
        defects.append(defect)
        g = rng.standard_normal((replicas, 2, J))
        inc = ((g[:, 0] + 1j * g[:, 1]) / math.sqrt(2)) @ L.T
        X = X - 0.5 * p.r0 * X * p.dt + inc
        q += math.exp(p.r0 * s) * float(np.real(np.mean(np.diag(U)))) * p.dt
    return OUPath(out, p.times, seed, Q, defects)


def analytic_mean(params: OUParams, t: float) -> complex:
    """``phihat_0(xi) e^{-R(0) t / 2}``, independent of ``eta``."""
    return params.phi0 * math.exp(-0.5 * params.r0 * t)


def analytic_cov(params: OUParams, t: float, eta_j, eta_k, nodes: int = 24):
    """``Cov(X(t, eta_j), X(t, eta_k))`` two ways.

    Returns ``(quadrature, quadrature_err, identity, identity_err)`` where
    ``quadrature = int_0^t e^{-R(0)(t - s)} Uhat(s, eta_j - eta_k, xi) ds`` by
    Gauss-Legendre and ``identity = fhat(t, eta_j - eta_k, xi) - |phihat_0(xi)|^2 e^{-R(0) t}``.
    """
    d = params.series.model.dimension
    deta = (np.atleast_1d(np.asarray(eta_j, float)) - np.atleast_1d(np.asarray(eta_k, float))).reshape(d)
    if t == 0:
        return 0j, 0.0, 0j, 0.0
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * t * (x + 1)
    w = 0.5 * t * w
    vals, errs = zip(*(params.series.uhat(si, deta, params.xi[None, :]) for si in s))
    vals = np.array([v[0] for v in vals])
    errs = np.array([e[0] for e in errs])
    damp = np.exp(-params.r0 * (t - s))
    quad = complex(np.sum(w * damp * vals))
    quad_err = float(np.sum(w * damp * errs))
    f, f_err = params.series.fhat(t, deta, params.xi[None, :])
    ident = complex(f[0]) - abs(params.phi0) ** 2 * math.exp(-params.r0 * t)
    return quad, quad_err, ident, float(f_err[0])


def analytic_cov_matrix(params: OUParams, t: float, method: str = "identity"):
    """``J x J`` reference covariance and its error from either route."""
    J = len(params.etas)
    C = np.zeros((J, J), complex)
    E = np.zeros((J, J))
    for j in range(J):
        for k in range(j, J):
            q, qe, f, fe = analytic_cov(params, t, params.etas[j], params.etas[k])
            v, e = (f, fe) if method == "identity" else (q, qe)
            C[j, k], E[j, k] = v, e
            C[k, j], E[k, j] = np.conj(v), e
    return C, E
