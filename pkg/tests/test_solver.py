import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from itolab.compensator import ProbeSpec, compensate
from itolab.correlation import CorrelationModel, eval_R, mode_weights
from itolab.exceptions import ConfigError, ProbeError
from itolab.initial import GaussianBump, TabulatedInitial
from itolab.lattice import GridSpec
from itolab.solver import (NoiseStream, WaveField, init_field, l2_norm, q_pathwise_bound,
                           q_stated_bound, run_ensemble, run_trajectory, sample_noise_increment,
                           step)

SMALL = dict(box_length=40.0, modes=128)


def small_grid(eps=0.5, **kw):
    return GridSpec.with_auto_dt(eps, k_active=12.0, probe_times=(0.5, 1.0), **{**SMALL, **kw})


# ---- lattice ---------------------------------------------------------------

def test_grid_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        GridSpec(modes=63)
    with pytest.raises(ConfigError):
        GridSpec(eps=0.0)
    with pytest.raises(ConfigError):
        GridSpec(dt=0.3, horizon=1.0)
    with pytest.raises(ConfigError):
        GridSpec(scaling="other")


@pytest.mark.parametrize("eps", [0.5, 0.35, 0.25, 0.18])
def test_auto_dt_phase_bound_and_alignment(eps):
    g = GridSpec.with_auto_dt(eps, k_active=12.0, probe_times=(0.5, 1.0))
    assert g.dispersion * 144 * g.dt / 2 <= math.pi / 4 * (1 + 1e-12)
    assert g.time_index(0.5) * 2 == g.n_steps


def test_mode_index_bounds():
    g = GridSpec(modes=16)
    assert g.mode_index(-1) == (15,)
    with pytest.raises(ProbeError):
        g.mode_index(8)
    with pytest.raises(ProbeError):
        g.mode_index((1, 2))


# ---- initial data and norms --------------------------------------------------

def test_init_field_peak_and_norm():
    g = GridSpec(**SMALL)
    f = init_field(g, GaussianBump())
    assert f.values[0] == 1.0
    oracle, _ = integrate.quad(lambda x: math.exp(-x * x), -np.inf, np.inf)
    assert l2_norm(f, g) ** 2 == pytest.approx(oracle, rel=5e-3)


def test_init_field_tabulated_zero():
    g = GridSpec(modes=32)
    f = init_field(g, TabulatedInitial(np.zeros(32), g.dk))
    assert np.all(f.values == 0) and l2_norm(f, g) == 0


def test_init_field_bump_beyond_lattice():
    with pytest.raises(ConfigError):
        init_field(GridSpec(modes=32, box_length=40.0), GaussianBump(center=(4.0,)))


@settings(max_examples=25, deadline=None)
@given(c=st.complex_numbers(min_magnitude=1e-100, max_magnitude=1e100, allow_nan=False, allow_infinity=False))
def test_l2_norm_homogeneous(c):
    g = GridSpec(**SMALL)
    f = init_field(g, GaussianBump())
    assert l2_norm(c * f.values, g) == pytest.approx(abs(c) * l2_norm(f, g), rel=1e-12, abs=1e-300)


# ---- noise -------------------------------------------------------------------

def test_noise_zero_model():
    g = small_grid()
    w = mode_weights(CorrelationModel(amplitude=0.0), g)
    assert np.all(sample_noise_increment(NoiseStream(0, 0), g, w) == 0)


def test_noise_covariance():
    g = small_grid()
    model = CorrelationModel()
    w = mode_weights(model, g)
    stream = NoiseStream(3, 0)
    n = 4000
    dB = np.array([sample_noise_increment(stream, g, w) for _ in range(n)])
    lag = int(round(0.7 / g.dx))
    for j, target in ((0, model.r0), (lag, eval_R(model, lag * g.dx))):
        prod = dB[:, 0] * dB[:, j] / g.dt
        se = prod.std(ddof=1) / math.sqrt(n)
        assert abs(prod.mean() - target) <= 3 * se
    # consecutive increments (real, then imaginary part of one synthesis) are uncorrelated
    c = dB[::2, 0] * dB[1::2, 0] / g.dt
    assert abs(c.mean()) <= 3 * c.std(ddof=1) / math.sqrt(len(c))


# ---- stepping ----------------------------------------------------------------

def test_free_evolution_is_exact():
    g = small_grid()
    model = CorrelationModel(amplitude=0.0)
    f = init_field(g, GaussianBump())
    phi0 = f.values.copy()
    stream = NoiseStream(0, 0)
    for _ in range(20):
        f = step(f, g, stream, model=model)
    exact = phi0 * np.exp(-1j * g.dispersion * g.ksq * f.time)
    np.testing.assert_allclose(f.values, exact, atol=1e-13)
    probe = ProbeSpec(0, ((0,), (3,)), (f.time,))
    np.testing.assert_allclose(compensate(f, probe, g), phi0[[0, 3]], atol=1e-13)


def test_single_mode_kick_matches_bessel_expansion():
    g = GridSpec(modes=64, box_length=2 * math.pi, dt=0.01, eps=0.5)
    k0, k1, a = 3, 2, 0.3
    values = np.zeros(64, complex)
    values[k0] = 1.0
    x = np.arange(64) * g.dx
    dB = a * np.cos(k1 * x)
    out = step(WaveField(values), g, NoiseStream(0, 0), dB=dB)
    phase = lambda k: np.exp(-1j * g.dispersion * k**2 * g.dt / 2)
    for n in range(-4, 5):
        k = k0 + n * k1
        expected = phase(k) * (-1j) ** n * special.jv(n, a) * phase(k0)
        assert out.values[k % 64] == pytest.approx(expected, abs=1e-14)


def test_norm_conservation_over_many_steps():
    g = GridSpec.with_auto_dt(0.25, k_active=12.0, probe_times=(1.0,), **SMALL)
    res = run_ensemble(g, CorrelationModel(), GaussianBump(), [ProbeSpec(0, ((0,),), (1.0,))],
                       base_seed=1, replicas=2)
    assert g.n_steps > 500
    assert res.norm_drift.max() < 1e-10


def test_martingale_tracker_monotone_and_bounded():
    g = small_grid()
    model = CorrelationModel()
    probe = ProbeSpec(0, ((0,),), (0.5, 1.0))
    _, tr = run_trajectory(g, model, GaussianBump(), NoiseStream(5, 2), probe)
    assert 0 < tr.Q[0] < tr.Q[1]
    n0 = GaussianBump().l2_norm_sq()
    assert tr.Q[1] <= q_pathwise_bound(model, n0, 1.0) <= q_stated_bound(model, n0, 1.0)


def test_tracker_vanishes_without_noise():
    g = small_grid()
    probe = ProbeSpec(0, ((0,),), (1.0,))
    _, tr = run_trajectory(g, CorrelationModel(amplitude=0.0), GaussianBump(), NoiseStream(0, 0), probe)
    assert tr.Q[0] == 0 and tr.scriptQ[0] == 0


def test_martingale_identities_in_mean():
    # E|M|^2 = E Q and E M^2 = E scriptQ with M = X e^{R0 t/2} - phi0
    g = small_grid()
    model = CorrelationModel()
    probe = ProbeSpec(0, ((0,),), (1.0,), label="p")
    res = run_ensemble(g, model, GaussianBump(), [probe], base_seed=11, replicas=300)
    M = res.X["p"][:, 0, 0] * math.exp(model.r0 / 2) - 1.0
    for diff in (np.abs(M) ** 2 - res.Q["p"][:, 0], M**2 - res.scriptQ["p"][:, 0]):
        se = math.sqrt(np.mean(np.abs(diff - diff.mean()) ** 2) / len(diff))
        assert abs(diff.mean()) <= 3 * se


def test_determinism_independent_of_blocking():
    g = small_grid()
    probes = [ProbeSpec(0, ((0,), (1,)), (0.5, 1.0), label="p")]
    a = run_ensemble(g, CorrelationModel(), GaussianBump(), probes, 7, 6, block_size=6)
    b = run_ensemble(g, CorrelationModel(), GaussianBump(), probes, 7, 6, block_size=4)
    c = run_ensemble(g, CorrelationModel(), GaussianBump(), probes, 7, [4, 5])
    assert a.X["p"].tobytes() == b.X["p"].tobytes()
    assert a.Q["p"].tobytes() == b.Q["p"].tobytes()
    assert a.X["p"][4:].tobytes() == c.X["p"].tobytes()


def test_parallel_workers_match_serial():
    g = small_grid()
    probes = [ProbeSpec(0, ((0,),), (1.0,), label="p")]
    a = run_ensemble(g, CorrelationModel(), GaussianBump(), probes, 9, 4, block_size=2)
    b = run_ensemble(g, CorrelationModel(), GaussianBump(), probes, 9, 4, block_size=2, workers=2)
    assert a.X["p"].tobytes() == b.X["p"].tobytes()


def test_different_seeds_differ():
    g = small_grid()
    probes = [ProbeSpec(0, ((0,),), (1.0,), label="p")]
    a = run_ensemble(g, CorrelationModel(), GaussianBump(), probes, 1, 2)
    b = run_ensemble(g, CorrelationModel(), GaussianBump(), probes, 2, 2)
    assert not np.array_equal(a.X["p"], b.X["p"])


def test_physical_and_scaled_runs_agree():
    eps = 0.35
    scaled = GridSpec.with_auto_dt(eps, k_active=12.0, probe_times=(0.5, 1.0), **SMALL)
    physical = GridSpec(dt=scaled.dt / eps**2, eps=eps, horizon=1 / eps**2, scaling="physical", **SMALL)
    assert physical.n_steps == scaled.n_steps
    probes = [ProbeSpec(0, ((0,), (1,)), (0.5, 1.0), label="p")]
    a = run_ensemble(scaled, CorrelationModel(), GaussianBump(), probes, 4, 3)
    b = run_ensemble(physical, CorrelationModel(), GaussianBump(), probes, 4, 3)
    np.testing.assert_allclose(b.X["p"], a.X["p"], atol=1e-9)
    np.testing.assert_allclose(b.Q["p"], a.Q["p"], rtol=1e-9)


def test_probe_time_validation():
    g = small_grid()
    with pytest.raises(ProbeError):
        run_ensemble(g, CorrelationModel(), GaussianBump(), [ProbeSpec(0, ((0,),), (0.3337,))], 0, 1)
    with pytest.raises(ProbeError):
        compensate(init_field(g, GaussianBump()), ProbeSpec(0, ((0,),), (1.0,)), g)
