"""Mergeable ensemble moments and the hypothesis tests run on solver ensembles.

Complex standard errors follow ``SE^2 = E|Z - EZ|^2 / M``; a complex statistic
passes the 3-SE rule when ``|z| <= 3``, whose false-alarm probability under a
circular Gaussian null is ``exp(-9)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from .exceptions import DegenerateError, ProbeError, SampleSizeError

ALPHA = 0.01
Z_MAX = 3.0


class Moments:
    """Streaming mean and (pseudo-)co-moments of vector samples.

    ``C = sum (x - m)(x - m)^H`` and ``P = sum (x - m)(x - m)^T``; merged with
    the pairwise update of Chan, Golub and LeVeque.
    """

    def __init__(self, dim: int, dtype=complex):
        self.count = 0
        self.mean = np.zeros(dim, dtype)
        self.C = np.zeros((dim, dim), dtype)
        self.P = np.zeros((dim, dim), dtype)

    @classmethod
    def from_samples(cls, x):
        x = np.asarray(x)
        if x.ndim == 1:
            x = x[:, None]
        out = cls(x.shape[1], np.result_type(x.dtype, float))
        if len(x) == 0:
            return out
        out.count = len(x)
        out.mean = x.mean(axis=0)
        dev = x - out.mean
        out.C = dev.T @ dev.conj()
        out.P = dev.T @ dev
        return out

    def merge(self, other: "Moments") -> "Moments":
        out = Moments(len(self.mean), np.result_type(self.mean.dtype, other.mean.dtype))
        n = self.count + other.count
        out.count = n
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.mean = self.mean + delta * (other.count / n)
        w = self.count * other.count / n
        out.C = self.C + other.C + w * np.outer(delta, delta.conj())
        out.P = self.P + other.P + w * np.outer(delta, delta)
        return out

    def cov(self) -> np.ndarray:
        """Sample covariance ``E[(x - m)(x - m)^H]`` with divisor ``n - 1``."""
        return self.C / max(self.count - 1, 1)

    def pseudo_cov(self) -> np.ndarray:
        return self.P / max(self.count - 1, 1)

    def mean_stderr(self) -> np.ndarray:
        return np.sqrt(np.real(np.diag(self.cov())) / max(self.count, 1))


class EnsembleAccumulator:
    """Moments of one probe group: values ``X_j``, intensities ``|X_j|^2``, ``Q`` and ``scriptQ``."""

    def __init__(self, n_eta: int):
        self.n_eta = n_eta
        self.X = Moments(n_eta, complex)
        self.I = Moments(n_eta, float)
        self.Q = Moments(1, float)
        self.SQ = Moments(1, complex)
        self.SQ_abs2 = Moments(1, float)

    @property
    def count(self) -> int:
        return self.X.count

    @classmethod
    def from_samples(cls, X, Q=None, scriptQ=None):
        X = np.asarray(X, dtype=complex)
        if X.ndim == 1:
            X = X[:, None]
        acc = cls(X.shape[1])
        acc.X = Moments.from_samples(X)
        acc.I = Moments.from_samples(np.abs(X) ** 2)
        if Q is not None:
            acc.Q = Moments.from_samples(np.asarray(Q, float))
        if scriptQ is not None:
            sq = np.asarray(scriptQ, complex)
            acc.SQ = Moments.from_samples(sq)
            acc.SQ_abs2 = Moments.from_samples(np.abs(sq) ** 2)
        return acc

    def update(self, X, Q=None, scriptQ=None) -> "EnsembleAccumulator":
        merged = self.merge(EnsembleAccumulator.from_samples(X, Q, scriptQ))
        self.__dict__.update(merged.__dict__)
        return self

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        if other.n_eta != self.n_eta:
            raise ValueError("cannot merge accumulators with different probe sets")
        out = EnsembleAccumulator(self.n_eta)
        for name in ("X", "I", "Q", "SQ", "SQ_abs2"):
            setattr(out, name, getattr(self, name).merge(getattr(other, name)))
        return out


@dataclass
class TestReport:
    """Outcome of one check. ``asserted=False`` marks report-only diagnostics."""

    name: str
    statistic: float
    threshold: float
    passed: bool
    stderr: float = float("nan")
    eps: float | None = None
    asserted: bool = True
    meta: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    """JSON-ready copy: numpy scalars to Python, complex to ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _safe_z(diff, se):
    """``diff / se`` with ``0 / 0 = 0`` and ``x / 0 = inf``."""
    diff, se = np.broadcast_arrays(np.asarray(diff, float), np.asarray(se, float))
    out = np.where(diff > 0, np.inf, 0.0)
    np.divide(diff, se, out=out, where=se > 0)
    return out


def _require(count, minimum):
    if count < minimum:
        raise SampleSizeError(f"{count} trajectories; at least {minimum} are required")


def _trend(values, errors, slack=1.0):
    """Per-step check ``v_i <= v_{i-1} + slack * sqrt(se_i^2 + se_{i-1}^2)``."""
    steps = []
    for i in range(1, len(values)):
        allow = slack * math.hypot(errors[i], errors[i - 1])
        steps.append(bool(values[i] <= values[i - 1] + allow))
    return steps


def second_moment_identity_test(X, wtilde: float, wtilde_err: float = 0.0,
                                eps: float | None = None, min_count: int = 400) -> TestReport:
    """Ensemble mean of ``|X|^2 = |psihat|^2 e^{-R(0) t}`` against ``w~(t, xi)``."""
    X = np.asarray(X).ravel()
    _require(X.size, min_count)
    I = np.abs(X) ** 2
    mean = I.mean()
    se = math.hypot(I.std(ddof=1) / math.sqrt(I.size), wtilde_err)
    z = (mean - wtilde) / se if se > 0 else (0.0 if mean == wtilde else math.inf)
    return TestReport("second_moment_identity", abs(z), Z_MAX, abs(z) <= Z_MAX, se, eps,
                      meta={"mean_intensity": mean, "wtilde": wtilde, "z": z, "count": X.size})


def gaussianity_test(X, eps: float | None = None, alpha: float = ALPHA,
                     min_count: int = 1000) -> TestReport:
    """Complex-Gaussianity suite on centered samples ``X~ = X - mean``.

    Per column: KS normality of the standardized real and imaginary parts
    (Bonferroni over all KS tests), ``|E X~^2| <= 3 SE`` and
    ``|corr(Re, Im)| <= 3 / sqrt(M)``. The statistic is the smallest KS
    p-value; ``threshold`` is the corrected significance.
    """
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    _require(len(X), min_count)
    M, J = X.shape
    dev = X - X.mean(axis=0)
    level = alpha / (2 * J)
    pvals, pseudo_z, corr_z, checks = [], [], [], []
    for j in range(J):
        parts = []
        for part in (dev[:, j].real, dev[:, j].imag):
            sd = part.std(ddof=1)
            parts.append(sps.kstest(part / sd, "norm").pvalue if sd > 0 else 0.0)
        pvals.extend(parts)
        sq = dev[:, j] ** 2
        se = math.sqrt(np.mean(np.abs(sq - sq.mean()) ** 2) / M)
        pz = abs(sq.mean()) / se if se > 0 else math.inf
        cz = abs(np.corrcoef(dev[:, j].real, dev[:, j].imag)[0, 1]) * math.sqrt(M)
        pseudo_z.append(pz)
        corr_z.append(cz)
        checks.append(min(parts) >= level and pz <= Z_MAX and cz <= Z_MAX)
    stat = min(pvals)
    return TestReport("gaussianity", stat, level, all(checks), eps=eps,
                      meta={"ks_pvalues": pvals, "pseudo_z": pseudo_z, "re_im_corr_z": corr_z,
                            "relative_pseudo": [abs(np.mean(dev[:, j] ** 2)) / np.mean(np.abs(dev[:, j]) ** 2)
                                                for j in range(J)],
                            "count": M})


def intensity_exponential_test(X, sigma2: float, eps: float | None = None,
                               alpha: float = ALPHA, tol: float = 1e-12) -> TestReport:
    """KS test of ``|X - mean|^2`` against the exponential law with mean ``2 sigma^2``."""
    if not sigma2 > tol:
        raise DegenerateError(f"sigma^2 = {sigma2:g} is degenerate")
    X = np.asarray(X, dtype=complex).ravel()
    I = np.abs(X - X.mean()) ** 2
    res = sps.kstest(I, "expon", args=(0.0, 2 * sigma2))
    return TestReport("intensity_exponential", res.pvalue, alpha, res.pvalue >= alpha, eps=eps,
                      meta={"ks_statistic": res.statistic, "mean_intensity": I.mean(),
                            "expected_mean": 2 * sigma2, "count": X.size})


def empirical_covariance(X):
    """``E[X~_j X~_k^*]`` and the per-entry standard errors."""
    X = np.asarray(X, dtype=complex)
    dev = X - X.mean(axis=0)
    M = len(X)
    prod = dev[:, :, None] * dev[:, None, :].conj()
    cov = prod.mean(axis=0)
    se = np.sqrt(np.mean(np.abs(prod - cov) ** 2, axis=0) / M)
    return cov, se


def covariance_discrepancy(X, reference, reference_err=None):
    """Largest ``|cov - reference|`` over entries, with the SE at that entry and max |z|."""
    cov, se = empirical_covariance(X)
    ref_err = np.zeros_like(se) if reference_err is None else np.asarray(reference_err)
    tot = np.sqrt(se**2 + ref_err**2)
    diff = np.abs(cov - np.asarray(reference))
    k = np.unravel_index(np.argmax(diff), diff.shape)
    z = diff / np.where(tot > 0, tot, np.inf)
    return {"max_abs": float(diff[k]), "se_at_max": float(tot[k]), "max_z": float(z.max()),
            "argmax": [int(i) for i in k], "cov": cov, "se": se}


def covariance_convergence_report(ladder, slack: float = 1.0) -> list[TestReport]:
    """Covariance ladder: per rung ``(eps, X, reference, reference_err)``.

    Rungs are ordered by decreasing ``eps``. Each rung's report holds the max
    absolute discrepancy; the trend check allows ``slack`` combined SEs and the
    final rung must have every entry within 3 SE. A final ``covariance_ladder``
    report aggregates both assertions.
    """
    if len(ladder) < 3:
        raise ValueError("the covariance ladder needs at least 3 rungs")
    reports, vals, errs = [], [], []
    for eps, X, ref, ref_err in ladder:
        d = covariance_discrepancy(X, ref, ref_err)
        vals.append(d["max_abs"])
        errs.append(d["se_at_max"])
        reports.append(TestReport("covariance_rung", d["max_abs"], float("nan"), True, d["se_at_max"],
                                  eps, asserted=False,
                                  meta={"max_z": d["max_z"], "argmax": d["argmax"]}))
    steps = _trend(vals, errs, slack)
    final_z = covariance_discrepancy(ladder[-1][1], ladder[-1][2], ladder[-1][3])["max_z"]
    ok = all(steps) and final_z <= Z_MAX
    reports.append(TestReport("covariance_ladder", final_z, Z_MAX, ok, errs[-1], ladder[-1][0],
                              meta={"discrepancy": vals, "stderr": errs, "trend_ok": steps,
                                    "eps": [r[0] for r in ladder]}))
    return reports


def _variance_with_se(x):
    x = np.asarray(x, float)
    n = x.size
    dev = x - x.mean()
    var = dev.var(ddof=1)
    m4 = np.mean(dev**4)
    return var, math.sqrt(max(m4 - var**2, 0.0) / n)


def self_averaging_test(ladder, q_reference: float, q_reference_err: float = 0.0,
                        slack: float = 1.0, min_count: int = 400) -> TestReport:
    """Self-averaging of the quadratic variations along ``ladder = [(eps, Q, scriptQ), ...]``.

    Asserts (i) mean ``Q`` at the final rung within 3 SE of ``q_reference``,
    (ii) ``Var Q`` and (iii) ``E|scriptQ|^2`` nonincreasing with ``slack`` SEs.
    """
    var_q, var_se, sq2, sq2_se = [], [], [], []
    for eps, Q, SQ in ladder:
        Q = np.asarray(Q, float)
        _require(Q.size, min_count)
        v, s = _variance_with_se(Q)
        var_q.append(v)
        var_se.append(s)
        a = np.abs(np.asarray(SQ)) ** 2
        sq2.append(a.mean())
        sq2_se.append(a.std(ddof=1) / math.sqrt(a.size))
    Qf = np.asarray(ladder[-1][1], float)
    se = math.hypot(Qf.std(ddof=1) / math.sqrt(Qf.size), q_reference_err)
    z = (Qf.mean() - q_reference) / se if se > 0 else (0.0 if Qf.mean() == q_reference else math.inf)
    var_steps = _trend(var_q, var_se, slack)
    sq_steps = _trend(sq2, sq2_se, slack)
    ok = abs(z) <= Z_MAX and all(var_steps) and all(sq_steps)
    return TestReport("self_averaging", abs(z), Z_MAX, ok, se, ladder[-1][0],
                      meta={"q_mean_final": Qf.mean(), "q_reference": q_reference, "z": z,
                            "var_q": var_q, "var_q_se": var_se, "var_trend_ok": var_steps,
                            "var_strictly_decreasing": bool(np.all(np.diff(var_q) < 0)),
                            "scriptq_abs2": sq2, "scriptq_abs2_se": sq2_se,
                            "scriptq_trend_ok": sq_steps, "eps": [r[0] for r in ladder]})


def fourth_moment_discrepancy(Xa, Xb, scale: float = 1.0):
    """``E[|a|^2 |b|^2] - E|a|^2 E|b|^2`` (times ``scale``) and its SE."""
    Ia, Ib = np.abs(np.asarray(Xa)) ** 2, np.abs(np.asarray(Xb)) ** 2
    prod = (Ia - Ia.mean()) * (Ib - Ib.mean())
    return scale * prod.mean(), scale * prod.std(ddof=1) / math.sqrt(prod.size)


def fourth_moment_factorization_test(ladder, same_momentum: bool = False, scale: float = 1.0,
                                     slack: float = 1.0) -> TestReport:
    """Factorization ``M4 - M2 M2^*`` along ``ladder = [(eps, Xa, Xb), ...]``.

    ``Xa`` and ``Xb`` are compensated values at two lattice momenta at equal
    times; ``scale = e^{2 R(0) t}`` converts to the interaction-picture field.
    With ``same_momentum`` the ladder term survives the limit, so the result is
    reported without assertion.
    """
    vals, errs = [], []
    for eps, Xa, Xb in ladder:
        v, s = fourth_moment_discrepancy(Xa, Xb, scale)
        vals.append(v)
        errs.append(s)
    z = abs(vals[-1]) / errs[-1] if errs[-1] > 0 else (0.0 if vals[-1] == 0 else math.inf)
    steps = _trend([abs(v) for v in vals], errs, slack)
    ok = z <= Z_MAX and all(steps)
    name = "fourth_moment_same_momentum" if same_momentum else "fourth_moment_factorization"
    return TestReport(name, z, Z_MAX, ok, errs[-1], ladder[-1][0], asserted=not same_momentum,
                      meta={"discrepancy": vals, "stderr": errs, "trend_ok": steps,
                            "eps": [r[0] for r in ladder]})


def require_distinct(p, p_prime):
    if tuple(np.atleast_1d(p)) == tuple(np.atleast_1d(p_prime)):
        raise ProbeError("the factorization claim requires p != p'")


def mean_test(X, expected: complex, name: str = "mean", eps=None) -> TestReport:
    """Complex 3-SE test of the ensemble mean of each column against ``expected``."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    M = len(X)
    dev = X - X.mean(axis=0)
    se = np.sqrt(np.mean(np.abs(dev) ** 2, axis=0) / M)
    z = _safe_z(np.abs(X.mean(axis=0) - np.asarray(expected)), se)
    return TestReport(name, float(z.max()), Z_MAX, bool(z.max() <= Z_MAX), float(se.max()), eps,
                      meta={"z": z, "mean": X.mean(axis=0)})


def pseudo_covariance_test(X, eps=None) -> TestReport:
    """``|E[X~_j X~_k]| <= 3 SE`` for all pairs."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    dev = X - X.mean(axis=0)
    prod = dev[:, :, None] * dev[:, None, :]
    p = prod.mean(axis=0)
    se = np.sqrt(np.mean(np.abs(prod - p) ** 2, axis=0) / len(X))
    z = _safe_z(np.abs(p), se)
    return TestReport("pseudo_covariance", float(z.max()), Z_MAX, bool(z.max() <= Z_MAX),
                      float(se.max()), eps, meta={"z": z})
