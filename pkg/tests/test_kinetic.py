import math

import numpy as np
import pytest

from scipy import integrate

from itolab.correlation import CorrelationModel
from itolab.exceptions import NegativeVariance, SingularTime, StabilityError, TailError
from itolab.initial import GaussianBump
from itolab.kinetic import (DuhamelSeries, KineticSolution, SeriesConfig, fhat_series,
                            required_order, sigma_sq, solve_wtilde_grid, solve_wtilde_mc,
                            solve_wtilde_series, tail_probability, u_density_series, uhat)
from oracles import gaussian_uhat0, gaussian_wtilde

MODEL, BUMP = CorrelationModel(), GaussianBump()
XI5 = np.array([-1.5, -0.4, 0.0, 0.8, 2.0])


@pytest.fixture(scope="module")
def series():
    return DuhamelSeries(MODEL, BUMP, 1.0, SeriesConfig(samples=40_000, seed=3))


def test_closed_form_oracle_frozen_value():
    # independent check of the oracle itself
    assert gaussian_wtilde(1.0, 0.0) == pytest.approx(0.6919061008335309, rel=1e-14)
    assert gaussian_wtilde(0.0, 0.7) == pytest.approx(math.exp(-0.49), rel=1e-15)


# ---- grid solver -------------------------------------------------------------

def test_grid_matches_closed_form():
    sol = solve_wtilde_grid(MODEL, BUMP, [0.5, 1.0], XI5)
    for i, t in enumerate((0.5, 1.0)):
        exact = np.array([gaussian_wtilde(t, x) for x in XI5])
        np.testing.assert_allclose(sol.wtilde[i], exact, atol=1e-6)
        # the reported error is a bound, not an estimate
        assert np.all(np.abs(sol.wtilde[i] - exact) <= sol.stderr[i])
        assert np.all(sol.stderr[i] < 1e-4)


def test_grid_conserves_mass():
    sol = solve_wtilde_grid(MODEL, BUMP, [1.0], None, n_points=512)
    assert sol.meta["mass"][0] == pytest.approx(sol.meta["mass0"], rel=1e-6)
    assert sol.meta["mass0"] == pytest.approx(BUMP.l2_norm_sq(), rel=1e-10)


def test_grid_without_noise_is_constant():
    sol = solve_wtilde_grid(CorrelationModel(amplitude=0.0), BUMP, [1.0], XI5)
    np.testing.assert_allclose(sol.wtilde[0], np.exp(-XI5**2), atol=1e-8)
    assert np.all(np.abs(sol.wtilde[0] - np.exp(-XI5**2)) <= sol.stderr[0] + 1e-15)


def test_grid_euler_agrees_and_checks_stability():
    a = solve_wtilde_grid(MODEL, BUMP, [1.0], XI5, mode="euler", dt=1e-3)
    np.testing.assert_allclose(a.wtilde[0], [gaussian_wtilde(1.0, x) for x in XI5], atol=1e-6)
    with pytest.raises(StabilityError):
        solve_wtilde_grid(CorrelationModel(amplitude=20.0), BUMP, [1.0], XI5, mode="euler", dt=0.1)


def test_grid_nonnegative_at_large_step():
    sol = solve_wtilde_grid(CorrelationModel(amplitude=20.0), BUMP, [1.0], None, dt=0.1,
                            n_points=256)
    assert sol.wtilde.min() >= 0


# ---- Monte Carlo -------------------------------------------------------------

def test_mc_matches_closed_form():
    sol = solve_wtilde_mc(MODEL, BUMP, [0.5, 1.0], XI5, samples=50_000, seed=1)
    for i, t in enumerate((0.5, 1.0)):
        exact = np.array([gaussian_wtilde(t, x) for x in XI5])
        assert np.all(np.abs(sol.wtilde[i] - exact) <= 3 * sol.stderr[i])


def test_mc_trivial_cases():
    sol = solve_wtilde_mc(CorrelationModel(amplitude=0.0), BUMP, [1.0], XI5, samples=100)
    np.testing.assert_allclose(sol.wtilde[0], np.exp(-XI5**2), rtol=1e-14)
    sol = solve_wtilde_mc(MODEL, BUMP, [0.0], XI5, samples=100)
    np.testing.assert_allclose(sol.wtilde[0], np.exp(-XI5**2), rtol=1e-14)


def test_mc_is_seeded():
    a = solve_wtilde_mc(MODEL, BUMP, [1.0], XI5, samples=2000, seed=5)
    b = solve_wtilde_mc(MODEL, BUMP, [1.0], XI5, samples=2000, seed=5)
    np.testing.assert_array_equal(a.wtilde, b.wtilde)


# ---- Duhamel series ----------------------------------------------------------

def test_tail_probability_against_direct_sum():
    x = 0.5
    direct = sum(math.exp(-x) * x**n / math.factorial(n) for n in range(9, 40))
    assert tail_probability(x, 8) == pytest.approx(direct, rel=1e-10)
    assert direct < 1e-6
    assert required_order(1.0, 1e-6) == 9


def test_tail_error_for_low_order():
    with pytest.raises(TailError):
        DuhamelSeries(MODEL, BUMP, 1.0, SeriesConfig(max_order=2, samples=10))
    with pytest.raises(TailError):
        required_order(500.0, 1e-300)


def test_zeroth_order_is_exact_decay():
    s = DuhamelSeries(MODEL, BUMP, 1.0, SeriesConfig(max_order=0, samples=10, tail_tol=1.0))
    v, _ = s.wtilde(0.7, XI5)
    np.testing.assert_allclose(v, np.exp(-XI5**2) * math.exp(-0.7), rtol=1e-14)


def test_series_matches_closed_form(series):
    sol = solve_wtilde_series(MODEL, BUMP, [0.5, 1.0], XI5, series=series)
    assert sol.meta["max_order"] == 9
    for i, t in enumerate((0.5, 1.0)):
        exact = np.array([gaussian_wtilde(t, x) for x in XI5])
        assert np.all(np.abs(sol.wtilde[i] - exact) <= 3 * sol.stderr[i])


def test_three_methods_agree(series):
    mc = solve_wtilde_mc(MODEL, BUMP, [1.0], XI5, samples=40_000, seed=2)
    gr = solve_wtilde_grid(MODEL, BUMP, [1.0], XI5)
    se = solve_wtilde_series(MODEL, BUMP, [1.0], XI5, series=series)
    for a, b in ((mc, gr), (se, gr), (mc, se)):
        err = np.hypot(a.stderr[0], b.stderr[0])
        assert np.all(np.abs(a.wtilde[0] - b.wtilde[0]) <= 3 * err)


def test_fhat_at_zero_offset_equals_wtilde(series):
    f, fe = series.fhat(1.0, 0.0, XI5)
    w, we = series.wtilde(1.0, XI5)
    np.testing.assert_array_equal(f.real, w)
    np.testing.assert_array_equal(fe, we)


def test_fhat_symmetry_and_bound(series):
    f_plus, _ = series.fhat(1.0, 2.0, XI5)
    f_minus, _ = series.fhat(1.0, -2.0, XI5)
    w, _ = series.wtilde(1.0, XI5)
    np.testing.assert_allclose(f_minus, np.conj(f_plus), atol=1e-14)
    assert np.all(np.abs(f_plus) <= w + 1e-12)


def test_fhat_wrapper_builds_its_own_samples():
    v, e = fhat_series(MODEL, BUMP, 1.0, 0.0, 0.0, cfg=SeriesConfig(samples=20_000))
    assert abs(v.real - gaussian_wtilde(1.0, 0.0)) <= 3 * e


def test_uhat_matches_closed_form(series):
    for s in (0.0, 0.4, 1.0):
        v, e = series.uhat(s, 0.0, XI5)
        exact = np.array([gaussian_uhat0(s, x) for x in XI5])
        assert np.all(np.abs(v - exact) <= 3 * e)
        assert np.all(np.abs(v.imag) < 1e-15)


def test_uhat_vanishes_without_noise():
    v, e = uhat(CorrelationModel(amplitude=0.0), BUMP, 0.5, 1.0, 0.0, cfg=SeriesConfig(samples=100))
    assert v == 0 and e == 0


def test_uhat_matrix_is_hermitian_psd(series):
    etas = np.array([[0.0], [4.0], [-4.0], [12.0]])
    U = series.uhat_matrix(0.6, etas, 0.3)
    np.testing.assert_allclose(U, U.conj().T, atol=0)
    assert np.linalg.eigvalsh(U).min() >= -1e-12 * np.trace(U).real
    v, _ = series.uhat(0.6, etas[0] - etas[1], 0.3)
    assert U[0, 1] == pytest.approx(v[0], abs=1e-12)


def test_u_density_fourier_transform_reproduces_uhat(series):
    t, xi = 0.8, 0.5
    x = np.linspace(-14, 14, 561)
    dens, _ = series.u_density(t, x, xi)
    assert dens.min() >= 0
    for eta in (0.0, 0.9, 2.5):
        ft = integrate.trapezoid(dens * np.exp(1j * eta * (t * xi - x)), x)
        v, e = series.uhat(t, eta, xi)
        assert ft == pytest.approx(v[0], abs=max(5e-4, 3 * e[0]))


def test_u_density_singular_time():
    with pytest.raises(SingularTime):
        u_density_series(MODEL, BUMP, 1e-3, 0.0, 0.0, cfg=SeriesConfig(samples=10))


# ---- variance ----------------------------------------------------------------

def test_sigma_sq_values():
    exact = 0.5 * (gaussian_wtilde(1.0, 0.0) - math.exp(-1.0))
    assert sigma_sq(MODEL, BUMP, 1.0, 0.0) == pytest.approx(exact, abs=1e-6)
    assert sigma_sq(MODEL, BUMP, 0.0, 0.0, solution=solve_wtilde_grid(MODEL, BUMP, [0.0], [0.0])) \
        == pytest.approx(0.0, abs=1e-14)
    assert sigma_sq(CorrelationModel(amplitude=0.0), BUMP, 1.0, 0.3) == pytest.approx(0.0, abs=1e-12)


def test_sigma_sq_rejects_inconsistent_solution():
    bad = KineticSolution("grid", np.array([1.0]), np.array([[0.0]]), np.array([[0.1]]),
                          np.array([[0.0]]))
    with pytest.raises(NegativeVariance):
        sigma_sq(MODEL, BUMP, 1.0, 0.0, solution=bad)
