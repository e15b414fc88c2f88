"""Output-field quantities reconstructed from trajectories.

Normalization convention: the trace quantities are per unit peak drive, so
for a unit-peak input the output intensity I(t) = |f1(t)|^2 is directly the
normalized transmission, G2(t) = |A2(t)|^2 is the normalized two-photon
intensity, and g2 = G2 / I^2 wherever the intensity is above a floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np
from .model import (AtomChain, ConfigurationError, PhysicalParams, ns_from_time)
from .dynamics import (Generator, SinglesPropagator, StateTrajectory, apply_field,
                       singles_blocks, _solve_singles_steady)


class ExtractionError(RuntimeError):
    """A transient-time or fit criterion could not be evaluated on the trace."""


class UndefinedResultError(RuntimeError):
    """A windowed estimator was requested where the intensity is below floor."""


DEFAULT_INTENSITY_FLOOR = 1e-4


# ---------------------------------------------------------------------------
# time traces

@dataclass
class ObservableTrace:
    """Time series of the normalized intensity, two-photon intensity and g2.

    ``g2`` is NaN wherever the intensity is at or below ``floor`` (division
    noise after pulse extinction).
    """

    times: np.ndarray
    envelope_unit: np.ndarray
    omega_c: np.ndarray
    intensity: np.ndarray
    g2tilde: np.ndarray
    g2: np.ndarray
    floor: float = DEFAULT_INTENSITY_FLOOR

    def __post_init__(self) -> None:
        n = len(self.times)
        for name in ("envelope_unit", "omega_c", "intensity", "g2tilde", "g2"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(f"trace column {name} does not match the grid")

    def window_mask(self, t_start: float, t_stop: float) -> np.ndarray:
        return (self.times >= t_start - 1e-12) & (self.times <= t_stop + 1e-12)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not on the trace grid")
        return i


def one_photon_amplitudes(traj: StateTrajectory, generator: Generator) -> np.ndarray:
    """f1(t) on the whole grid: input plus collective forward emission."""
    n1 = traj.index.dim_singles
    return traj.envelope_unit + traj.states[:, :n1] @ generator.out_e


def two_photon_amplitudes(traj: StateTrajectory, generator: Generator) -> np.ndarray:
    """A2(t): fully de-excited component of the doubly applied field operator."""
    n1 = traj.index.dim_singles
    f_single = traj.states[:, :n1] @ generator.out_e
    return (traj.envelope_unit ** 2 + 2.0 * traj.envelope_unit * f_single
            + traj.states[:, n1:] @ generator.a2vec)


def output_amplitude_at(traj: StateTrajectory, generator: Generator, t: float) -> complex:
    """f1 at one grid time (input plus collective forward emission)."""
    i = traj.locate(t)
    from .dynamics import one_photon_amplitude
    return one_photon_amplitude(traj.state_at(i), float(traj.envelope_unit[i]), generator)


def equal_time_g2tilde_at(traj: StateTrajectory, generator: Generator, t: float) -> float:
    """Normalized two-photon intensity |A2|^2 at one grid time."""
    i = traj.locate(t)
    from .dynamics import two_photon_amplitude
    return float(abs(two_photon_amplitude(traj.state_at(i),
                                          float(traj.envelope_unit[i]), generator)) ** 2)


def trace_from_trajectory(traj: StateTrajectory, generator: Generator,
                          floor: float = DEFAULT_INTENSITY_FLOOR) -> ObservableTrace:
    f1 = one_photon_amplitudes(traj, generator)
    a2 = two_photon_amplitudes(traj, generator)
    intensity = np.abs(f1) ** 2
    g2tilde = np.abs(a2) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(intensity > floor, g2tilde / intensity ** 2, np.nan)
    return ObservableTrace(times=traj.times.copy(), envelope_unit=traj.envelope_unit.copy(),
                           omega_c=traj.omega_c.copy(), intensity=intensity,
                           g2tilde=g2tilde, g2=g2, floor=floor)


# ---------------------------------------------------------------------------
# two-time correlations

@dataclass
class CorrelationGrid:
    """G2(t1, t2) on a square time grid, with the marginal intensity."""

    times: np.ndarray
    g2_matrix: np.ndarray
    intensity: np.ndarray
    envelope_unit: np.ndarray

    def __post_init__(self) -> None:
        m = len(self.times)
        if self.g2_matrix.shape != (m, m):
            raise ConfigurationError("correlation matrix does not match the grid")

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not on the correlation grid")
        return i


def two_time_g2(traj: StateTrajectory, generator: Generator, t1: float, t2: float,
                dt: float | None = None) -> float:
    """G2(t1, t2) for a single pair of grid times: annihilate one photon at t1,
    evolve the conditioned state to t2 under the same generator, annihilate
    again and take the squared modulus of the ground component."""
    from .dynamics import conditional_evolve, conditioned_output
    if t2 < t1:
        t1, t2 = t2, t1
    i1 = traj.locate(t1)
    cstate = apply_field(traj.state_at(i1), float(traj.envelope_unit[i1]), generator)
    cstate = conditional_evolve(cstate, generator, t1, t2, dt=dt,
                                drive_scale=traj.drive_scale)
    env2 = generator.envelope.unit_shape(t2)
    return float(abs(conditioned_output(cstate, env2, generator)) ** 2)


def correlation_grid(traj: StateTrajectory, generator: Generator,
                     i_start: int = 0, i_stop: int | None = None, stride: int = 1,
                     dt: float | None = None) -> CorrelationGrid:
    """Fill G2 over the trajectory sub-grid [i_start:i_stop:stride].

    All conditioned columns advance together one grid interval at a time, so
    the cost is O(n_grid^2 * dim_singles) rather than one full evolution per
    row.  The diagonal reproduces the equal-time G2 exactly.
    """
    if i_stop is None:
        i_stop = traj.n_samples
    sel = np.arange(i_start, i_stop, stride, dtype=int)
    if len(sel) < 2:
        raise ConfigurationError("correlation grid needs at least two samples")
    n1 = traj.index.dim_singles
    m = len(sel)
    prop = SinglesPropagator(generator, traj.times, dt=dt, drive_scale=traj.drive_scale)

    y = np.zeros((1 + n1, m), dtype=complex)
    g2 = np.zeros((m, m), dtype=float)
    col = 0
    for k in range(sel[0], sel[-1] + 1):
        if col < m and k == sel[col]:
            cs = apply_field(traj.state_at(k), float(traj.envelope_unit[k]), generator)
            y[0, col] = cs.ground
            y[1:, col] = cs.singles
            col += 1
            env_k = traj.envelope_unit[k]
            a2_row = env_k * y[0, :col] + generator.out_e @ y[1:, :col]
            g2[:col, col - 1] = np.abs(a2_row) ** 2
        if k < sel[-1]:
            y[:, :col] = prop.step(k, y[:, :col])

    iu, ju = np.triu_indices(m, k=1)
    g2[ju, iu] = g2[iu, ju]

    f1 = traj.envelope_unit[sel] + traj.states[sel, :n1] @ generator.out_e
    return CorrelationGrid(times=traj.times[sel].copy(), g2_matrix=g2,
                           intensity=np.abs(f1) ** 2,
                           envelope_unit=traj.envelope_unit[sel].copy())


def _window_slice(times: np.ndarray, t_start: float, width: float):
    a = int(np.searchsorted(times, t_start - 1e-9))
    b = int(np.searchsorted(times, t_start + width + 1e-9))
    if b - a < 2:
        raise UndefinedResultError(
            f"window [{t_start}, {t_start + width}] holds fewer than two grid samples")
    return a, b


def windowed_g2(grid: CorrelationGrid, w1, w2,
                floor: float = DEFAULT_INTENSITY_FLOOR) -> float:
    """Windowed correlation: coincidence mass over the product of the windowed
    intensities, trapezoidal quadrature on the grid.  Exactly 1 for coherent
    light.  ``w1``/``w2`` are (start_time, width) pairs."""
    a1, b1 = _window_slice(grid.times, *w1)
    a2, b2 = _window_slice(grid.times, *w2)
    t1 = grid.times[a1:b1]
    t2 = grid.times[a2:b2]
    num = np.trapezoid(np.trapezoid(grid.g2_matrix[a1:b1, a2:b2], t2, axis=1), t1)
    p1 = np.trapezoid(grid.intensity[a1:b1], t1)
    p2 = np.trapezoid(grid.intensity[a2:b2], t2)
    if p1 <= floor * (t1[-1] - t1[0]) or p2 <= floor * (t2[-1] - t2[0]):
        raise UndefinedResultError("windowed intensity below floor; g2 undefined")
    return float(num / (p1 * p2))


# ---------------------------------------------------------------------------
# CW transmission spectrum

def transmission_spectrum(params: PhysicalParams, chain: AtomChain, omega_c: float,
                          deltas) -> list:
    """CW intensity transmission versus probe detuning (two-photon detuning
    scans along with the probe; the control stays on resonance)."""
    out = []
    for d in np.asarray(deltas, dtype=float):
        p = dc_replace(params, delta_e=float(d), delta_2=float(d))
        m1s, m1o, s1, out_e = singles_blocks(p, chain)
        psi1 = _solve_singles_steady(p, m1s + omega_c * m1o, s1, omega_c, chain.n_atoms)
        t_amp = 1.0 + out_e @ psi1
        out.append((float(d), float(abs(t_amp) ** 2)))
    return out


def eit_peak(spectrum):
    """(delta, T) of the transparency peak: the local transmission maximum
    nearest zero detuning (the wings recover toward 1 far outside the
    absorption dips, so the global maximum is not the EIT window)."""
    d = np.array([p[0] for p in spectrum])
    t = np.array([p[1] for p in spectrum])
    i = int(np.argmin(np.abs(d)))
    while 0 < i < len(t) - 1:
        if t[i + 1] > t[i]:
            i += 1
        elif t[i - 1] > t[i]:
            i -= 1
        else:
            break
    return float(d[i]), float(t[i]), i


def spectrum_fwhm(spectrum) -> float:
    """Full width at half maximum of the EIT transparency window given as
    (delta, T) pairs; linear interpolation at the half crossings."""
    d = np.array([p[0] for p in spectrum])
    t = np.array([p[1] for p in spectrum])
    _, t_peak, i0 = eit_peak(spectrum)
    half = 0.5 * t_peak
    lo = None
    for i in range(i0, 0, -1):
        if t[i - 1] < half <= t[i]:
            lo = np.interp(half, [t[i - 1], t[i]], [d[i - 1], d[i]])
            break
    hi = None
    for i in range(i0, len(t) - 1):
        if t[i + 1] < half <= t[i]:
            hi = np.interp(half, [t[i + 1], t[i]], [d[i + 1], d[i]])
            break
    if lo is None or hi is None:
        raise ExtractionError("transmission window does not cross half maximum in range")
    return float(hi - lo)


# ---------------------------------------------------------------------------
# steady-state measurement and transient extraction

@dataclass
class SteadyStateStats:
    i_ss: float
    g2tilde_ss: float
    g2_ss: float
    flat: bool
    max_deviation: float


def measure_steady_state(trace: ObservableTrace, t_on: float, t_off: float,
                         tail_fraction: float = 0.1, flat_tol: float = 0.005) -> SteadyStateStats:
    """Average over the final ``tail_fraction`` of the on-interval, with a
    flatness check on the intensity (max fractional deviation < flat_tol)."""
    t0 = t_off - tail_fraction * (t_off - t_on)
    eps = 1e-9 * max(1.0, abs(t_off))
    mask = (trace.times >= t0 - eps) & (trace.times < t_off - eps)
    if not np.any(mask):
        raise ExtractionError("no samples in the steady-state window")
    i_win = trace.intensity[mask]
    g_win = trace.g2tilde[mask]
    i_ss = float(np.mean(i_win))
    g2t_ss = float(np.mean(g_win))
    dev = float(np.max(np.abs(i_win - i_ss)) / i_ss) if i_ss > 0 else math.inf
    g2_ss = g2t_ss / i_ss ** 2 if i_ss > 0 else math.nan
    return SteadyStateStats(i_ss=i_ss, g2tilde_ss=g2t_ss, g2_ss=g2_ss,
                            flat=dev < flat_tol, max_deviation=dev)


@dataclass
class TransientTimes:
    tau_eit: float
    tau_0: float | None = None
    tau_i: float | None = None
    tau_ii: float | None = None


def tau_eit(d: float, gamma_prime: float, omega_c: float) -> float:
    """EIT traversal time 4 D Gamma' / Omega_c^2."""
    return 4.0 * d * gamma_prime / omega_c ** 2


def extract_tau0(trace: ObservableTrace, t_on: float, t_off: float, g2_ss: float,
                 rel_tol: float = 0.005) -> float:
    """First time after turn-on from which |g2 - g2_ss|/g2_ss stays below
    ``rel_tol`` at every later sample up to t_off (no false early crossings
    during ringing).  NaN samples count as violations."""
    eps = 1e-9 * max(1.0, abs(t_off))
    mask = (trace.times >= t_on - eps) & (trace.times < t_off - eps)
    if g2_ss <= 0 or not np.any(mask):
        raise ExtractionError("turn-on window empty or g2_ss invalid")
    t = trace.times[mask]
    rel = np.abs(trace.g2[mask] - g2_ss) / g2_ss
    bad = ~(rel < rel_tol)  # NaN -> True
    if bad[-1]:
        raise ExtractionError("g2 never settles to the steady value before t_off")
    last_bad = int(np.max(np.nonzero(bad)[0])) if np.any(bad) else -1
    return float(t[last_bad + 1] - t_on)


def _first_half_crossing(t: np.ndarray, y: np.ndarray, level: float, t_ref: float,
                         falling_only: bool = False) -> float:
    """First time the signal drops to ``level``; with ``falling_only`` the
    crossing must follow a sample above the level (the retrieved intensity
    starts at zero right after shutoff, flashes up, then falls)."""
    below = y <= level
    if falling_only:
        seen_above = np.concatenate([[False], np.maximum.accumulate(~below)[:-1]])
        below = below & seen_above
    if not np.any(below):
        raise ExtractionError("signal never drops to the half level in the trace")
    i = int(np.argmax(below))
    if i == 0:
        return float(t[0] - t_ref)
    # linear interpolation between the bracketing samples
    frac = (y[i - 1] - level) / (y[i - 1] - y[i])
    return float(t[i - 1] + frac * (t[i] - t[i - 1]) - t_ref)


def extract_tau_i(trace: ObservableTrace, t_off: float, i_ss: float) -> float:
    """Time after shutoff for the intensity to drop to half its steady value
    (the falling crossing after the retrieval flash)."""
    mask = trace.times >= t_off - 1e-12
    return _first_half_crossing(trace.times[mask], trace.intensity[mask],
                                0.5 * i_ss, t_off, falling_only=True)


def extract_tau_ii(trace: ObservableTrace, t_off: float) -> float:
    """Time after shutoff for the two-photon intensity to drop to half of its
    value immediately after shutoff (the sample exactly at t_off is the
    post-jump one by the right-continuity convention)."""
    mask = trace.times >= t_off - 1e-12
    t = trace.times[mask]
    y = trace.g2tilde[mask]
    if len(t) < 2:
        raise ExtractionError("no samples after shutoff")
    return _first_half_crossing(t, y, 0.5 * y[0], t_off)


def extract_transients(trace: ObservableTrace, t_on: float, t_off: float, *,
                       d: float, gamma_prime: float, omega_c: float,
                       g2_ss: float | None = None, rel_tol: float = 0.005) -> TransientTimes:
    """All transient times of a square-pulse trace spanning both edges."""
    stats = measure_steady_state(trace, t_on, t_off)
    if not stats.flat:
        raise ExtractionError(
            f"steady state not reached before shutoff (deviation {stats.max_deviation:.3g})")
    if g2_ss is None:
        g2_ss = stats.g2_ss
    return TransientTimes(
        tau_eit=tau_eit(d, gamma_prime, omega_c),
        tau_0=extract_tau0(trace, t_on, t_off, g2_ss, rel_tol),
        tau_i=extract_tau_i(trace, t_off, stats.i_ss),
        tau_ii=extract_tau_ii(trace, t_off),
    )


def fit_exponential_envelope(trace: ObservableTrace, t_start: float, t_end: float) -> float:
    """Decay rate of the upper envelope of G2 over [t_start, t_end].

    The envelope is the set of samples not exceeded by any later sample in the
    range (for a monotone decay that is every sample; for an oscillating decay
    it is the descending crests).  Least squares on the log of those points;
    fewer than 3 envelope points is a fit error.
    """
    mask = (trace.times >= t_start - 1e-12) & (trace.times <= t_end + 1e-12)
    t = trace.times[mask]
    y = trace.g2tilde[mask]
    if len(t) < 3:
        raise ExtractionError("fit range holds fewer than 3 samples")
    if np.any(y <= 0):
        raise ExtractionError("two-photon intensity not positive on the fit range")
    run_max = np.maximum.accumulate(y[::-1])[::-1]
    on_env = np.zeros(len(y), dtype=bool)
    on_env[:-1] = y[:-1] >= run_max[1:]
    on_env[-1] = True
    if int(np.sum(on_env)) < 3:
        raise ExtractionError("fewer than 3 envelope maxima in the fit range")
    slope, _ = np.polyfit(t[on_env], np.log(y[on_env]), 1)
    return float(-slope)


# ---------------------------------------------------------------------------
# CSV emission

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns: list, rows, units_note: str = "") -> None:
    """Plain CSV with a '#' units/meta header; floats via repr (byte-stable)."""
    with open(path, "w", encoding="utf-8") as fh:
        if units_note:
            fh.write(f"# {units_note}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_trace_csv(trace: ObservableTrace, path, gamma_mhz: float = 6.0) -> None:
    cols = ["t_gamma", "t_ns", "envelope_unit", "omega_c_gamma",
            "intensity_norm", "g2tilde", "g2"]
    rows = [(float(t), ns_from_time(float(t), gamma_mhz), float(e), float(o),
             float(i), float(g), float(g2))
            for t, e, o, i, g, g2 in zip(trace.times, trace.envelope_unit, trace.omega_c,
                                         trace.intensity, trace.g2tilde, trace.g2)]
    write_csv(path, cols, rows,
              units_note="times in 1/Gamma and ns; Gamma = 2*pi*%s MHz; intensities "
                         "normalized per unit peak drive" % repr(float(gamma_mhz)))


def write_grid_csv(grid: CorrelationGrid, path, gamma_mhz: float = 6.0) -> None:
    cols = ["t1_gamma", "t1_ns", "t2_gamma", "t2_ns", "g2_two_time"]
    rows = []
    for i, t1 in enumerate(grid.times):
        for j, t2 in enumerate(grid.times):
            rows.append((float(t1), ns_from_time(float(t1), gamma_mhz),
                         float(t2), ns_from_time(float(t2), gamma_mhz),
                         float(grid.g2_matrix[i, j])))
    write_csv(path, cols, rows,
              units_note="two-time correlation G2(t1,t2) per unit peak drive^4; "
                         "Gamma = 2*pi*%s MHz" % repr(float(gamma_mhz)))
