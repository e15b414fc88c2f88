"""Monte Carlo emulation of the Hanbury Brown-Twiss detection pipeline and the
coincidence-counting estimator with inter-trial normalization.

Generative model (weak-drive leading order): each trial emits at most one
event, either a photon pair with probability P2 = (E0^4/2) * double integral
of G2, with times drawn from G2 by acceptance-rejection, or a single photon
with probability P1 = E0^2 * int I - 2 P2, with times drawn from the
intensity-weighted density minus the pair marginal.  Photons are then routed
by the splitting ratio and thinned by the efficiency budget.  With this
construction the coincidence estimator converges to the quadrature value
(double integral of G2 over the product of windowed intensities) for any
photon statistics, sub-Poissonian included.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import ConfigurationError, ns_from_time
from .observables import CorrelationGrid, ObservableTrace


class EstimateError(RuntimeError):
    """The estimator is undefined on the given stream (e.g. empty baseline)."""


@dataclass(frozen=True)
class EfficiencyBudget:
    """Collection path and detector efficiencies of the HBT setup."""

    eta_path: float = 0.46   # ensemble -> beamsplitter input
    eta1: float = 0.43
    eta2: float = 0.43
    split: float = 0.5       # fraction of the light sent to detector 1

    def __post_init__(self) -> None:
        for name in ("eta_path", "eta1", "eta2", "split"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")

    @property
    def p_detect_1(self) -> float:
        return self.eta_path * self.split * self.eta1

    @property
    def p_detect_2(self) -> float:
        return self.eta_path * (1.0 - self.split) * self.eta2


@dataclass
class DetectionStream:
    """Trial-tagged detection timestamps (times relative to the trial trigger)."""

    trials: np.ndarray        # int trial index per event
    detectors: np.ndarray     # 1 or 2
    times_ns: np.ndarray
    n_trials: int
    trial_period_ns: float = 16000.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if not (len(self.trials) == len(self.detectors) == len(self.times_ns)):
            raise ConfigurationError("stream arrays must have equal length")

    @property
    def n_events(self) -> int:
        return len(self.trials)

    def counts_in_window(self, detector: int, window_ns) -> np.ndarray:
        """Per-trial counts of the given detector inside [t, t + dt] (ns)."""
        t0, width = window_ns
        mask = (self.detectors == detector) & (self.times_ns >= t0 - 1e-9) \
            & (self.times_ns <= t0 + width + 1e-9)
        return np.bincount(self.trials[mask], minlength=self.n_trials)


# ---------------------------------------------------------------------------
# timestamp file format

def _write_stream(stream: DetectionStream, fh) -> None:
    fh.write(f"# rydeit timestamps n_trials={stream.n_trials} "
             f"trial_period_ns={stream.trial_period_ns!r} seed={stream.seed}\n")
    fh.write("# columns: trial_index detector_id time_ns\n")
    for tr, det, t in zip(stream.trials, stream.detectors, stream.times_ns):
        fh.write(f"{int(tr)} {int(det)} {float(t)!r}\n")


def save_stream(stream: DetectionStream, path_or_file) -> None:
    """One line per event: 'trial_index detector_id time_ns'; accepts a path
    or any writable text handle."""
    if hasattr(path_or_file, "write"):
        _write_stream(stream, path_or_file)
        return
    with open(path_or_file, "w", encoding="utf-8") as fh:
        _write_stream(stream, fh)


def load_stream(path) -> DetectionStream:
    trials, dets, times = [], [], []
    n_trials = None
    period = 16000.0
    seed = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("n_trials="):
                        n_trials = int(tok.split("=", 1)[1])
                    elif tok.startswith("trial_period_ns="):
                        period = float(tok.split("=", 1)[1])
                    elif tok.startswith("seed="):
                        s = tok.split("=", 1)[1]
                        seed = None if s == "None" else int(s)
                continue
            if not line:
                continue
            tr, det, t = line.split()
            trials.append(int(tr))
            dets.append(int(det))
            times.append(float(t))
    if n_trials is None:
        n_trials = (max(trials) + 1) if trials else 0
    return DetectionStream(trials=np.array(trials, dtype=int),
                           detectors=np.array(dets, dtype=int),
                           times_ns=np.array(times, dtype=float),
                           n_trials=n_trials, trial_period_ns=period, seed=seed)


# ---------------------------------------------------------------------------
# trial emulation

def _grid_interp2(times: np.ndarray, values: np.ndarray, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a square grid at points (t1, t2)."""
    i = np.clip(np.searchsorted(times, t1) - 1, 0, len(times) - 2)
    j = np.clip(np.searchsorted(times, t2) - 1, 0, len(times) - 2)
    fx = (t1 - times[i]) / (times[i + 1] - times[i])
    fy = (t2 - times[j]) / (times[j + 1] - times[j])
    v00 = values[i, j]
    v10 = values[i + 1, j]
    v01 = values[i, j + 1]
    v11 = values[i + 1, j + 1]
    return (v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy)
            + v01 * (1 - fx) * fy + v11 * fx * fy)


def emulate_trials(trace: ObservableTrace, grid: CorrelationGrid, n_in: float,
                   budget: EfficiencyBudget, n_trials: int, seed: int,
                   trial_period_ns: float = 16000.0, gamma_mhz: float = 6.0) -> DetectionStream:
    """Synthesize the detection record of ``n_trials`` identical trials."""
    if n_trials < 1:
        raise ConfigurationError("need at least one trial")
    env2 = np.trapezoid(trace.envelope_unit ** 2, trace.times)
    if env2 <= 0:
        raise ConfigurationError("trace carries no input pulse")
    e0sq = n_in / env2

    lam = e0sq * trace.intensity                       # output photon rate
    mu1 = float(np.trapezoid(lam, trace.times))

    # pair sector on the correlation grid
    pair_density = e0sq ** 2 * grid.g2_matrix
    mu2 = float(np.trapezoid(np.trapezoid(pair_density, grid.times, axis=1), grid.times))
    p_pair = 0.5 * mu2

    # subtract the pair marginal from the singles density
    rho_grid = np.trapezoid(pair_density, grid.times, axis=1)
    rho = np.zeros_like(lam)
    gi = np.clip(np.searchsorted(trace.times, grid.times), 0, len(lam) - 1)
    if not np.allclose(trace.times[gi], grid.times, rtol=0, atol=1e-9):
        raise ConfigurationError("correlation grid times are not trace samples")
    rho[gi] = rho_grid
    lam_single = np.clip(lam - rho, 0.0, None)
    p_single = float(np.trapezoid(lam_single, trace.times))

    p_detect_mean = (mu1) * max(budget.p_detect_1, budget.p_detect_2)
    if p_single + p_pair > 0.5 or p_detect_mean > 0.5:
        warnings.warn("mean photons per trial above 0.5; the at-most-one-event "
                      "emulation is outside its validity range", RuntimeWarning)

    rng = np.random.default_rng(seed)
    u = rng.random(n_trials)
    pair_trials = np.nonzero(u < p_pair)[0]
    single_trials = np.nonzero((u >= p_pair) & (u < p_pair + p_single))[0]

    # pair times by acceptance-rejection against the grid maximum
    k2 = len(pair_trials)
    g2max = float(np.max(pair_density)) if pair_density.size else 0.0
    t_lo, t_hi = float(grid.times[0]), float(grid.times[-1])
    acc1 = np.empty(0)
    acc2 = np.empty(0)
    while len(acc1) < k2 and g2max > 0:
        batch = max(256, 4 * (k2 - len(acc1)))
        c1 = rng.uniform(t_lo, t_hi, batch)
        c2 = rng.uniform(t_lo, t_hi, batch)
        keep = rng.random(batch) * g2max < _grid_interp2(grid.times, pair_density, c1, c2)
        acc1 = np.concatenate([acc1, c1[keep]])
        acc2 = np.concatenate([acc2, c2[keep]])
    acc1, acc2 = acc1[:k2], acc2[:k2]

    # single times by inverse CDF of the subtracted density
    k1 = len(single_trials)
    cdf = np.concatenate([[0.0], np.cumsum(np.diff(trace.times)
                                           * 0.5 * (lam_single[1:] + lam_single[:-1]))])
    if cdf[-1] > 0:
        t_single = np.interp(rng.random(k1) * cdf[-1], cdf, trace.times)
    else:
        t_single = np.empty(0)
        single_trials = single_trials[:0]

    # route and thin every photon
    def route(times_gamma: np.ndarray, trial_ids: np.ndarray):
        r = rng.random(len(times_gamma))
        det1 = r < budget.p_detect_1
        det2 = (~det1) & (r < budget.p_detect_1 + budget.p_detect_2)
        trials_out = np.concatenate([trial_ids[det1], trial_ids[det2]])
        dets_out = np.concatenate([np.ones(int(det1.sum()), dtype=int),
                                   np.full(int(det2.sum()), 2, dtype=int)])
        times_out = np.concatenate([times_gamma[det1], times_gamma[det2]])
        return trials_out, dets_out, times_out

    ta, da, za = route(acc1, pair_trials)
    tb, db, zb = route(acc2, pair_trials)
    tc, dc, zc = route(t_single, single_trials)

    trials = np.concatenate([ta, tb, tc])
    dets = np.concatenate([da, db, dc])
    times = np.concatenate([za, zb, zc])
    order = np.lexsort((times, dets, trials))
    return DetectionStream(trials=trials[order].astype(int), detectors=dets[order],
                           times_ns=times[order] * ns_from_time(1.0, gamma_mhz),
                           n_trials=n_trials, trial_period_ns=trial_period_ns, seed=seed)


# ---------------------------------------------------------------------------
# coincidence estimator

def estimate_g2(stream: DetectionStream, w1_ns, w2_ns,
                baseline_trials=(5, 20)):
    """Windowed g2 from same-trial cross-detector coincidences, normalized by
    the mean coincidences against the ``baseline_trials`` offset range.

    Returns (value, standard_error); Poisson counting errors propagated from
    the coincidence and baseline counts.
    """
    if stream.n_trials <= baseline_trials[1]:
        raise EstimateError("need more trials than the largest baseline offset")
    n1 = stream.counts_in_window(1, w1_ns)
    n2 = stream.counts_in_window(2, w2_ns)
    t = stream.n_trials
    same = float(np.dot(n1, n2))

    k_lo, k_hi = baseline_trials
    b_rates = []
    b_total = 0.0
    for k in range(k_lo, k_hi + 1):
        bk = float(np.dot(n1[: t - k], n2[k:]))
        b_total += bk
        b_rates.append(bk / (t - k))
    baseline = float(np.mean(b_rates))
    if baseline <= 0.0:
        raise EstimateError("zero baseline coincidences; estimate undefined")

    value = (same / t) / baseline
    if same > 0:
        se = value * math.sqrt(1.0 / same + 1.0 / b_total)
    else:
        se = (1.0 / t) / baseline
    return value, se


def generation_probability_from_trace(trace: ObservableTrace, window, n_in: float) -> float:
    """Photons per trial at the cloud output inside the window (Gamma units)."""
    env2 = np.trapezoid(trace.envelope_unit ** 2, trace.times)
    if env2 <= 0:
        return 0.0
    e0sq = n_in / env2
    t0, width = window
    mask = trace.window_mask(t0, t0 + width)
    if int(np.sum(mask)) < 2:
        return 0.0
    return float(e0sq * np.trapezoid(trace.intensity[mask], trace.times[mask]))


def generation_probability_from_stream(stream: DetectionStream, window_ns,
                                       budget: EfficiencyBudget) -> float:
    """Counts per trial at detector 1 divided by the detection budget."""
    n1 = stream.counts_in_window(1, window_ns)
    eta = budget.p_detect_1
    if eta <= 0:
        raise ConfigurationError("detector-1 budget is zero; cannot infer generation")
    return float(np.mean(n1) / eta)


def dlcz_compare(p: float, eta_d: float = 1.0, eta_r: float = 1.0):
    """Reference probabilistic pair source: retrieved-photon autocorrelation
    4p and generation probability p * eta_D * eta_R."""
    if p < 0:
        raise ConfigurationError("pair probability must be >= 0")
    if not (0.0 <= eta_d <= 1.0 and 0.0 <= eta_r <= 1.0):
        raise ConfigurationError("efficiencies must be in [0, 1]")
    if p > 0.1:
        warnings.warn("pair probability above 0.1; 4p approximation degrades",
                      RuntimeWarning)
    return 4.0 * p, p * eta_d * eta_r
