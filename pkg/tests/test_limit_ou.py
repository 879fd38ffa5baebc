import math

import numpy as np
import pytest

from itolab.correlation import CorrelationModel
from itolab.exceptions import CovarianceError
from itolab.initial import GaussianBump
from itolab.kinetic import DuhamelSeries, SeriesConfig
from itolab.limit_ou import (OUParams, analytic_cov, analytic_cov_matrix, analytic_mean,
                             psd_factor, sample_ou_paths)
from itolab.stats import gaussianity_test, intensity_exponential_test, mean_test, pseudo_covariance_test
from oracles import gaussian_wtilde

ETAS = np.array([[0.0], [2.5], [-2.5]])


@pytest.fixture(scope="module")
def params():
    series = DuhamelSeries(CorrelationModel(), GaussianBump(), 1.0, SeriesConfig(samples=20_000, seed=1))
    return OUParams(0.0, ETAS, (0.5, 1.0), series, dt=0.01)


@pytest.fixture(scope="module")
def paths(params):
    return sample_ou_paths(params, 3000, seed=2)


def test_analytic_mean():
    series = DuhamelSeries(CorrelationModel(), GaussianBump(), 1.0, SeriesConfig(samples=10))
    p = OUParams(0.0, ETAS, (1.0,), series)
    assert analytic_mean(p, 0.0) == 1.0
    assert analytic_mean(p, 2 * math.log(2)) == pytest.approx(0.5, rel=1e-15)


def test_no_noise_is_deterministic():
    series = DuhamelSeries(CorrelationModel(amplitude=0.0), GaussianBump(), 1.0,
                           SeriesConfig(samples=10))
    p = OUParams(0.0, ETAS, (1.0,), series, dt=0.1)
    out = sample_ou_paths(p, 5, seed=0)
    np.testing.assert_allclose(out.values, 1.0, rtol=0)
    assert np.all(out.Q == 0)


def test_analytic_cov_routes_agree_with_closed_form(params):
    q, qe, f, fe = analytic_cov(params, 1.0, ETAS[0], ETAS[0])
    exact = gaussian_wtilde(1.0, 0.0) - math.exp(-1.0)
    assert abs(q - exact) <= 3 * qe and abs(f - exact) <= 3 * fe
    for j, k in ((0, 1), (1, 2)):
        q, qe, f, fe = analytic_cov(params, 1.0, ETAS[j], ETAS[k])
        assert abs(q - f) <= 3 * math.hypot(qe, fe)
    assert analytic_cov(params, 0.0, ETAS[0], ETAS[1]) == (0j, 0.0, 0j, 0.0)


def test_analytic_cov_matrix_hermitian(params):
    C, E = analytic_cov_matrix(params, 0.5)
    np.testing.assert_allclose(C, C.conj().T, atol=0)
    assert np.all(E > 0)


def test_ou_mean_and_covariance(params, paths):
    for i, t in enumerate(params.times):
        X = paths.values[:, i]
        assert mean_test(X, analytic_mean(params, t)).passed
        C, E = analytic_cov_matrix(params, t)
        dev = X - X.mean(axis=0)
        prod = dev[:, :, None] * dev[:, None, :].conj()
        se = np.sqrt(np.mean(np.abs(prod - prod.mean(0)) ** 2, axis=0) / len(X))
        assert np.all(np.abs(prod.mean(0) - C) <= 3 * np.hypot(se, E))
        assert pseudo_covariance_test(X).passed


def test_ou_is_circular_gaussian(params, paths):
    X = paths.values[:, -1]
    assert gaussianity_test(X).passed
    s2 = 0.5 * (gaussian_wtilde(1.0, 0.0) - math.exp(-1.0))
    assert intensity_exponential_test(X[:, 0], s2).passed


def test_ou_deterministic_Q(params, paths):
    # Q(t) = int e^{R0 s} Uhat(s, 0, xi) ds = e^{R0 t} w~(t, xi) - |phi0|^2 (left-point sum)
    exact = math.exp(1.0) * gaussian_wtilde(1.0, 0.0) - 1.0
    assert paths.Q[-1] == pytest.approx(exact, rel=0.02)
    assert max(paths.psd_defects) <= params.psd_tol


def test_ou_seeded(params):
    a = sample_ou_paths(params, 3, seed=9)
    b = sample_ou_paths(params, 3, seed=9)
    assert a.values.tobytes() == b.values.tobytes()


def test_psd_factor_clips_and_rejects():
    C = np.array([[1.0, 0.0], [0.0, -1e-9]], complex)
    L, defect = psd_factor(C, 1e-6)
    np.testing.assert_allclose(L @ L.conj().T, np.diag([1.0, 0.0]), atol=1e-15)
    assert 0 < defect < 1e-6
    with pytest.raises(CovarianceError):
        psd_factor(np.array([[1.0, 2.0], [2.0, 1.0]], complex), 1e-6)


def test_output_times_must_align():
    series = DuhamelSeries(CorrelationModel(), GaussianBump(), 1.0, SeriesConfig(samples=10))
    with pytest.raises(ValueError):
        OUParams(0.0, ETAS, (0.333, 1.0), series, dt=0.01)
