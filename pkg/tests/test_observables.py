import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydeit.model import BlockadeConfig, optical_depth
from rydeit.dynamics import evolve
from rydeit.observables import (CorrelationGrid, ExtractionError, ObservableTrace,
                                UndefinedResultError, correlation_grid, eit_peak,
                                extract_tau0, extract_tau_i, extract_tau_ii,
                                extract_transients, fit_exponential_envelope,
                                measure_steady_state, spectrum_fwhm, tau_eit,
                                trace_from_trajectory, transmission_spectrum,
                                two_time_g2, windowed_g2, write_csv)

from conftest import make_generator


def _synthetic_trace(times, intensity, g2tilde, envelope=None, omega=None):
    times = np.asarray(times, float)
    intensity = np.asarray(intensity, float)
    g2tilde = np.asarray(g2tilde, float)
    env = np.ones_like(times) if envelope is None else np.asarray(envelope, float)
    om = np.full_like(times, 0.5) if omega is None else np.asarray(omega, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(intensity > 1e-4, g2tilde / intensity ** 2, np.nan)
    return ObservableTrace(times=times, envelope_unit=env, omega_c=om,
                           intensity=intensity, g2tilde=g2tilde, g2=g2)


# ---------------------------------------------------------------------------
# output amplitudes

def test_no_atoms_equivalent_input_passthrough():
    # a chain must hold at least one atom; the zero-state trace plays the role
    # of "atoms never excited": output equals the bare input
    gen = make_generator(n_atoms=1, omega_c=0.5)
    from rydeit.statespace import zero_state
    from rydeit.dynamics import one_photon_amplitude
    assert one_photon_amplitude(zero_state(gen.index), 0.73, gen) == pytest.approx(0.73)


def test_coherent_factorization_trace(params):
    gen = make_generator(n_atoms=10, blockade=BlockadeConfig.none(), duration=30.0)
    traj = evolve(gen, (0.0, 45.0), dt=0.01, dt_out=0.25, method="auto")
    trace = trace_from_trajectory(traj, gen)
    mask = trace.intensity > 1e-2
    assert np.nanmax(np.abs(trace.g2[mask] - 1.0)) < 1e-6


def test_two_time_factorization_and_symmetry():
    gen = make_generator(n_atoms=6, blockade=BlockadeConfig.none(), duration=20.0)
    traj = evolve(gen, (0.0, 30.0), dt_out=0.5, method="auto")
    grid = correlation_grid(traj, gen, i_start=0, i_stop=50, stride=4)
    outer = np.outer(grid.intensity, grid.intensity)
    assert np.max(np.abs(grid.g2_matrix - outer)) < 1e-6
    assert np.max(np.abs(grid.g2_matrix - grid.g2_matrix.T)) < 1e-10


def test_two_time_matches_equal_time_on_diagonal():
    gen = make_generator(n_atoms=5, duration=20.0)
    traj = evolve(gen, (0.0, 25.0), dt_out=0.5, method="auto")
    trace = trace_from_trajectory(traj, gen)
    for i in (3, 17, 30):
        t = float(traj.times[i])
        val = two_time_g2(traj, gen, t, t)
        assert val == pytest.approx(trace.g2tilde[i], abs=1e-8)


def test_two_time_g2_off_diagonal_consistent_with_grid():
    gen = make_generator(n_atoms=5, duration=20.0)
    traj = evolve(gen, (0.0, 25.0), dt_out=0.5, method="auto")
    grid = correlation_grid(traj, gen, i_start=10, i_stop=40, stride=3)
    i, j = 2, 7
    t1, t2 = float(grid.times[i]), float(grid.times[j])
    assert two_time_g2(traj, gen, t1, t2) == pytest.approx(
        grid.g2_matrix[i, j], rel=1e-7, abs=1e-12)


# ---------------------------------------------------------------------------
# windowed estimator

def _coherent_grid(t_max=10.0, n=101):
    ts = np.linspace(0.0, t_max, n)
    return CorrelationGrid(times=ts, g2_matrix=np.ones((n, n)),
                           intensity=np.ones(n), envelope_unit=np.ones(n))


def test_windowed_g2_coherent_is_one():
    grid = _coherent_grid()
    assert windowed_g2(grid, (0.0, 4.0), (3.0, 5.0)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.0, 5.0), w=st.floats(0.5, 4.0))
def test_windowed_g2_coherent_any_window(a, w):
    grid = _coherent_grid()
    assert windowed_g2(grid, (a, w), (a, w)) == pytest.approx(1.0, abs=1e-10)


def test_windowed_g2_floor_error():
    ts = np.linspace(0.0, 10.0, 101)
    grid = CorrelationGrid(times=ts, g2_matrix=np.zeros((101, 101)),
                           intensity=np.full(101, 1e-7), envelope_unit=np.ones(101))
    with pytest.raises(UndefinedResultError):
        windowed_g2(grid, (0.0, 5.0), (0.0, 5.0))


def test_windowed_g2_converges_to_instantaneous():
    # shrink the window at a steady point: gap to g2(t) closes roughly linearly
    gen = make_generator(n_atoms=10, omega_c=0.5, duration=120.0)
    traj = evolve(gen, (0.0, 110.0), dt_out=0.2, method="auto")
    trace = trace_from_trajectory(traj, gen)
    grid = correlation_grid(traj, gen, i_start=trace.index_of(80.0) - 100,
                            i_stop=trace.index_of(80.0) + 101)
    g2_inst = float(trace.g2[trace.index_of(80.0)])
    gaps = []
    widths = (16.0, 8.0, 4.0, 2.0)
    for w in widths:
        val = windowed_g2(grid, (80.0 - w / 2, w), (80.0 - w / 2, w))
        gaps.append(abs(val - g2_inst))
    assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))
    # the gap closes at least linearly as the window shrinks 8x
    assert gaps[-1] < 0.2 * gaps[0]


def test_two_time_g2_recovers_to_one_at_large_delay():
    # in the blockaded steady state, pairs separated by more than the memory
    # time are uncorrelated: g2(t, t+tau) climbs from the antibunched
    # equal-time value back to ~1
    gen = make_generator(n_atoms=10, omega_c=0.5, duration=120.0)
    traj = evolve(gen, (0.0, 110.0), dt_out=0.5, method="auto")
    trace = trace_from_trajectory(traj, gen)
    i0 = trace.index_of(60.0)
    grid = correlation_grid(traj, gen, i_start=i0, i_stop=i0 + 81)
    norm = grid.g2_matrix[0, :] / (grid.intensity[0] * grid.intensity)
    assert norm[0] < 0.3
    assert norm[-1] > 0.9
    assert norm[-1] == pytest.approx(1.0, abs=0.05)


# ---------------------------------------------------------------------------
# spectrum

def test_spectrum_perfect_eit_at_resonance(params, chain10):
    spec = transmission_spectrum(params, chain10, omega_c=0.5, deltas=[0.0])
    assert spec[0][1] == pytest.approx(1.0, abs=1e-10)


def test_spectrum_two_level_resonance(params, chain10):
    spec = transmission_spectrum(params, chain10, omega_c=0.0, deltas=[0.0])
    assert spec[0][1] == pytest.approx(math.exp(-optical_depth(chain10, params)),
                                       rel=1e-6)


def test_spectrum_fwhm_on_analytic_window():
    deltas = np.linspace(-2.0, 2.0, 801)
    width = 0.31
    spec = [(float(d), float(math.exp(-(d / (width / 2)) ** 2 * math.log(2))))
            for d in deltas]
    assert spectrum_fwhm(spec) == pytest.approx(width, rel=2e-3)
    _, pk, _ = eit_peak(spec)
    assert pk == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# steady-state measurement and transient extraction

def test_measure_steady_state_flatness():
    ts = np.linspace(0.0, 100.0, 1001)
    flat = np.where(ts < 95.0, 0.5, 0.5)
    tr = _synthetic_trace(ts, flat, 0.1 * flat ** 2)
    stats = measure_steady_state(tr, 0.0, 100.0)
    assert stats.flat
    assert stats.i_ss == pytest.approx(0.5)
    assert stats.g2_ss == pytest.approx(0.1)  # (0.1 * 0.25) / 0.25^2
    drift = 0.5 + 0.05 * np.sin(ts)
    tr2 = _synthetic_trace(ts, drift, 0.1 * drift ** 2)
    assert not measure_steady_state(tr2, 0.0, 100.0).flat


def test_tau_eit_arithmetic():
    # 4 * 9.1 * (Gamma/1.2) / (Gamma/2)^2 = 121.3/Gamma
    assert tau_eit(9.1, 1.0 / 1.2, 0.5) == pytest.approx(121.3333333, rel=1e-9)


def test_extract_tau0_permanence_rule():
    ts = np.linspace(0.0, 100.0, 2001)
    g2ss = 0.2
    # crosses into the band early, leaves again, settles for good at t = 40
    g2 = np.full_like(ts, 0.2)
    g2[ts < 10.0] = 1.0
    g2[(ts >= 20.0) & (ts < 40.0)] = 0.2 * 1.02
    intensity = np.ones_like(ts)
    tr = _synthetic_trace(ts, intensity, g2 * intensity ** 2)
    tau0 = extract_tau0(tr, 0.0, 100.0, g2ss)
    assert tau0 == pytest.approx(40.0, abs=0.1)


def test_extract_tau0_never_settles():
    ts = np.linspace(0.0, 50.0, 501)
    tr = _synthetic_trace(ts, np.ones_like(ts), np.full_like(ts, 0.4))
    with pytest.raises(ExtractionError):
        extract_tau0(tr, 0.0, 50.0, 0.2)


def test_extract_tau_i_falling_crossing():
    ts = np.linspace(0.0, 30.0, 3001)
    t_off = 10.0
    i_ss = 0.8
    # retrieval shape: zero at shutoff, flash above, then exponential fall
    intensity = np.where(ts < t_off, i_ss,
                         1.2 * i_ss * (1 - np.exp(-(ts - t_off) / 0.2))
                         * np.exp(-(ts - t_off) / 3.0))
    tr = _synthetic_trace(ts, intensity, 0.1 * intensity ** 2)
    tau_i = extract_tau_i(tr, t_off, i_ss)
    target = 0.5 * i_ss
    after = ts >= t_off
    rising_done = intensity[after] > target
    assert tau_i > 0.2  # not the initial zero
    idx = np.nonzero(after)[0]
    val = np.interp(t_off + tau_i, ts, intensity)
    assert val == pytest.approx(target, rel=1e-3)


def test_extract_tau_ii_half_of_post_jump():
    ts = np.linspace(10.0, 20.0, 2001)
    g2t = 0.9 * np.exp(-(ts - 10.0) / 1.5)
    tr = _synthetic_trace(ts, np.ones_like(ts), g2t)
    tau = extract_tau_ii(tr, 10.0)
    assert tau == pytest.approx(1.5 * math.log(2.0), rel=1e-3)


def test_extract_transients_end_to_end():
    # D ~ 9.1: deep enough that the retrieved intensity crosses half of the
    # steady value (at low depth the flash stays below half and tau_I is
    # undefined, which is why the deep-medium grid is used for it)
    gen = make_generator(n_atoms=25, omega_c=0.5, duration=120.0)
    traj = evolve(gen, (0.0, 160.0), dt_out=0.1, method="auto")
    trace = trace_from_trajectory(traj, gen)
    tt = extract_transients(trace, 0.0, 120.0, d=optical_depth(gen.chain, gen.params),
                            gamma_prime=gen.params.gamma_prime, omega_c=0.5)
    assert tt.tau_0 > 0
    assert tt.tau_i > 0
    assert tt.tau_ii > 0
    assert tt.tau_eit == pytest.approx(
        tau_eit(optical_depth(gen.chain, gen.params), gen.params.gamma_prime, 0.5))


# ---------------------------------------------------------------------------
# exponential envelope fit

def test_fit_pure_exponentials_within_one_percent():
    ts = np.linspace(2.0, 20.0, 400)
    for rate in (1.0, 2.0):
        tr = _synthetic_trace(ts, np.ones_like(ts), 0.5 * np.exp(-rate * ts))
        assert fit_exponential_envelope(tr, 2.0, 20.0) == pytest.approx(rate, rel=0.01)


def test_fit_oscillating_envelope():
    ts = np.linspace(0.0, 19.5, 2000)
    y = np.exp(-ts) * (0.55 + 0.45 * np.cos(3.0 * ts)) ** 2
    tr = _synthetic_trace(ts, np.ones_like(ts), y)
    rate = fit_exponential_envelope(tr, 0.0, 19.5)
    assert rate == pytest.approx(1.0, rel=0.15)


def test_fit_too_few_points_errors():
    ts = np.linspace(0.0, 10.0, 100)
    tr = _synthetic_trace(ts, np.ones_like(ts), np.exp(-ts))
    with pytest.raises(ExtractionError):
        fit_exponential_envelope(tr, 4.0, 4.05)


# ---------------------------------------------------------------------------
# csv emission

def test_write_csv_is_plain_and_stable(tmp_path):
    path = tmp_path / "out.csv"
    rows = [(1.0, 0.5, "ok"), (2.0, float("nan"), "bad")]
    write_csv(path, ["a", "b", "status"], rows, "demo units")
    text = path.read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "# demo units"
    assert lines[1] == "a,b,status"
    assert lines[2] == "1.0,0.5,ok"
    assert "nan" in lines[3]
