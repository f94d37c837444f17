"""Event-driven stochastic simulation of single emitter trajectories.

The state machine is the (G, X, D) charge model of :mod:`boundex.dynamics`
plus an optional ON/OFF telegraph that gates the G->X excitation. Waiting
times for the constant-rate channels are exponential; the discharge channel
is sampled exactly by inverting its cumulative hazard from the current clock.

Every trajectory draws from its own ``numpy.random.Generator`` seeded with
``SeedSequence([master_seed, index])``, so ensembles are identical whatever
the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .correlation import coincidence_histogram
from .dynamics import D, G, X, EmitterModel, PulseSequence, Segment, discharge_clock
from .errors import DomainError
from .timetags import FLAG_DARK, TimeTagStream

__all__ = [
    "DetectorModel",
    "Trajectory",
    "EnsembleResult",
    "trajectory_rng",
    "simulate_trajectory",
    "run_ensemble",
    "detect",
    "simulate_g2_stream",
    "simulate_g2_experiment",
    "poisson_stream",
]

FS_PER_S = 1e15


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0
    dark_rate: float = 0.0  # per channel, s^-1
    jitter_sigma: float = 0.0  # ps
    dead_time: float = 0.0  # ns
    splitter_ratio: float = 0.5  # probability of channel 1

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise DomainError("efficiency must lie in [0, 1]")
        if not 0 <= self.splitter_ratio <= 1:
            raise DomainError("splitter_ratio must lie in [0, 1]")
        for name in ("dark_rate", "jitter_sigma", "dead_time"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")


@dataclass
class Trajectory:
    emissions: np.ndarray  # s
    path_times: np.ndarray  # s, time of each state change (first entry 0)
    path_states: np.ndarray  # charge state entered at path_times
    on_time: float  # total telegraph ON time, s
    duration: float

    def state_at(self, t):
        i = np.searchsorted(self.path_times, t, side="right") - 1
        return self.path_states[i]


@dataclass
class EnsembleResult:
    checkpoints: np.ndarray
    counts: np.ndarray  # (n_checkpoints, 3) trajectories in G, X, D
    n_trajectories: int
    emissions_per_trajectory: np.ndarray = field(repr=False, default=None)
    first_emission: np.ndarray = field(repr=False, default=None)  # s, NaN if none

    @property
    def populations(self):
        return self.counts / self.n_trajectories

    @property
    def standard_errors(self):
        p = self.populations
        return np.sqrt(p * (1.0 - p) / self.n_trajectories)


def trajectory_rng(master_seed, index):
    if master_seed is None:
        raise DomainError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), int(index)])))


# ---------------------------------------------------------------- kernel

@numba.njit(cache=True)
def _grow(a, n):
    if n < a.size:
        return a
    b = np.empty(2 * a.size, a.dtype)
    b[: a.size] = a
    return b


@numba.njit(nogil=True, cache=True)
def _kernel(rng, dur, exc, gam, aug, rech, hazard, clock0, k_on, k_off, scale, shape,
            state0, tele0, checkpoints, record_path):
    n_seg = dur.size
    n_cp = checkpoints.size
    cp_states = np.empty(n_cp, np.int8)
    em = np.empty(1024, np.float64)
    n_em = 0
    pt = np.empty(256 if record_path else 1, np.float64)
    ps = np.empty(256 if record_path else 1, np.int8)
    n_path = 0
    if record_path:
        pt[0] = 0.0
        ps[0] = state0
        n_path = 1
    telegraph = k_on > 0.0 and k_off > 0.0
    if not telegraph:
        on = True
    elif tele0 < 0:
        on = rng.random() < k_on / (k_on + k_off)
    else:
        on = tele0 == 1
    s = state0
    t = 0.0
    on_time = 0.0
    cp = 0
    seg_start = 0.0
    for i in range(n_seg):
        t_end = seg_start + dur[i]
        while True:
            r_exc = exc[i] if (s == 0 and on) else 0.0
            r_rad = gam if s == 1 else 0.0
            r_aug = aug[i] if s == 1 else 0.0
            r_rech = rech[i] if s == 2 else 0.0
            r_tel = 0.0
            if telegraph:
                r_tel = k_off if on else k_on
            total = r_exc + r_rad + r_aug + r_rech + r_tel
            dt_c = np.inf
            if total > 0.0:
                dt_c = rng.exponential(1.0 / total)
            dt_h = np.inf
            if hazard[i] and s == 0:
                c = clock0[i] + (t - seg_start)
                e = rng.exponential(1.0)
                c1 = scale * ((c / scale) ** shape + e) ** (1.0 / shape)
                dt_h = c1 - c
            step = min(dt_c, dt_h)
            t_new = t + step
            if t_new >= t_end:
                t_new = t_end
            while cp < n_cp and checkpoints[cp] < t_new:
                cp_states[cp] = s
                cp += 1
            if on:
                on_time += t_new - t
            t = t_new
            if t >= t_end:
                break
            prev = s
            if dt_h < dt_c:
                s = 2
            else:
                u = rng.random() * total
                if u < r_exc:
                    s = 1
                elif u < r_exc + r_rad:
                    s = 0
                    em = _grow(em, n_em)
                    em[n_em] = t
                    n_em += 1
                elif u < r_exc + r_rad + r_aug:
                    s = 2
                elif u < r_exc + r_rad + r_aug + r_rech:
                    s = 0
                else:
                    on = not on
            if record_path and s != prev:
                pt = _grow(pt, n_path)
                ps = _grow(ps, n_path)
                pt[n_path] = t
                ps[n_path] = s
                n_path += 1
        seg_start = t_end
    while cp < n_cp:
        cp_states[cp] = s
        cp += 1
    return em[:n_em].copy(), pt[:n_path].copy(), ps[:n_path].copy(), on_time, cp_states


def _segment_arrays(seq: PulseSequence, m: EmitterModel, clock0):
    segs = seq.segments
    dur = np.array([s.duration for s in segs])
    exc = np.array([m.excitation_rate(s.p_resonant, s.p_aboveband) for s in segs])
    aug = np.array([m.auger_per_nw * s.p_resonant for s in segs])
    rech = np.array([m.recharge_rate(s.p_aboveband) for s in segs])
    hazard = np.array([m.discharge_enabled and s.p_aboveband == 0 for s in segs])
    clocks = discharge_clock(seq, clock0)
    return dur, exc, aug, rech, hazard, clocks


def _telegraph_rates_per_s(m: EmitterModel):
    if m.telegraph is None:
        return 0.0, 0.0
    return m.telegraph.k_on * 1e9, m.telegraph.k_off * 1e9


def _run(rng, arrays, m, state0, tele0, checkpoints, record_path):
    dur, exc, aug, rech, hazard, clocks = arrays
    k_on, k_off = _telegraph_rates_per_s(m)
    scale = m.discharge_scale if m.discharge_enabled else 1.0
    return _kernel(rng, dur, exc, float(m.gamma_rad), aug, rech, hazard, clocks, k_on, k_off,
                   float(scale), float(m.discharge_shape), np.int8(state0), tele0,
                   np.asarray(checkpoints, dtype=np.float64), record_path)


def _tele_code(telegraph_on):
    return -1 if telegraph_on is None else int(bool(telegraph_on))


def simulate_trajectory(m: EmitterModel, seq: PulseSequence, seed, initial_state=G,
                        telegraph_on=None, clock0=0.0, index=0) -> Trajectory:
    """One exact-event trajectory through ``seq``.

    ``telegraph_on=None`` draws the initial telegraph state from its
    stationary distribution.
    """
    if initial_state not in (G, X, D):
        raise DomainError("initial_state must be G, X or D")
    rng = trajectory_rng(seed, index)
    arrays = _segment_arrays(seq, m, clock0)
    em, pt, ps, on_time, _ = _run(rng, arrays, m, initial_state, _tele_code(telegraph_on),
                                  np.empty(0), True)
    return Trajectory(em, pt, ps, float(on_time), seq.duration)


def run_ensemble(m: EmitterModel, seq: PulseSequence, checkpoints, n_trajectories, seed,
                 initial_state=G, telegraph_on=None, clock0=0.0, workers=1) -> EnsembleResult:
    """State occupancies at ``checkpoints`` over independent trajectories."""
    if n_trajectories < 1:
        raise DomainError("n_trajectories must be >= 1")
    checkpoints = np.asarray(checkpoints, dtype=float)
    arrays = _segment_arrays(seq, m, clock0)
    tele = _tele_code(telegraph_on)
    n_cp = checkpoints.size

    def work(lo, hi):
        states = np.empty((hi - lo, n_cp), np.int8)
        n_em = np.empty(hi - lo, np.int64)
        first = np.full(hi - lo, np.nan)
        for k in range(lo, hi):
            em, _, _, _, cps = _run(trajectory_rng(seed, k), arrays, m, initial_state, tele,
                                    checkpoints, False)
            states[k - lo] = cps
            n_em[k - lo] = em.size
            if em.size:
                first[k - lo] = em[0]
        return states, n_em, first

    workers = max(1, int(workers))
    edges = np.linspace(0, n_trajectories, workers + 1).astype(int)
    if workers == 1:
        parts = [work(0, n_trajectories)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, edges[:-1], edges[1:]))
    states = np.concatenate([p[0] for p in parts])
    n_em = np.concatenate([p[1] for p in parts])
    first = np.concatenate([p[2] for p in parts])
    counts = np.stack([(states == s).sum(axis=0) for s in (G, X, D)], axis=1)
    return EnsembleResult(checkpoints, counts, n_trajectories, n_em, first)


# ---------------------------------------------------------------- detection

@numba.njit(cache=True)
def _dead_time_mask(times, dead):
    keep = np.zeros(times.size, np.bool_)
    last = -1
    for i in range(times.size):
        if last < 0 or times[i] - times[last] >= dead:
            keep[i] = True
            last = i
    return keep


def detect(emissions, det: DetectorModel, span, seed, time_unit_fs=1) -> TimeTagStream:
    """Detected two-channel time tags for emission times ``emissions`` (s).

    Every emission consumes the same random numbers whatever the efficiency
    (survival uniform, routing uniform, jitter normal), and the dark counts
    come from a separate child stream, so lowering the efficiency only ever
    removes tags.
    """
    if seed is None:
        raise DomainError("an explicit seed is required")
    if not span > 0:
        raise DomainError("span must be > 0")
    emissions = np.asarray(emissions, dtype=float)
    if emissions.size > 1 and np.any(np.diff(emissions) < 0):
        raise DomainError("emissions must be sorted")
    sig_ss, dark_ss = np.random.SeedSequence(int(seed)).spawn(2)
    rng = np.random.default_rng(sig_ss)
    n = emissions.size
    u_keep = rng.random(n)
    u_route = rng.random(n)
    jitter = rng.standard_normal(n) * det.jitter_sigma * 1e-12
    keep = u_keep < det.efficiency
    t_sig = np.clip(emissions[keep] + jitter[keep], 0.0, None)
    ch_sig = (u_route[keep] < det.splitter_ratio).astype(np.uint32)

    drng = np.random.default_rng(dark_ss)
    t_dark, ch_dark = [], []
    for ch in (0, 1):
        k = drng.poisson(det.dark_rate * span)
        t_dark.append(np.sort(drng.random(k)) * span)
        ch_dark.append(np.full(k, ch, dtype=np.uint32))
    tick = time_unit_fs / FS_PER_S
    ts = np.concatenate([t_sig] + t_dark)
    chans = np.concatenate([ch_sig] + ch_dark)
    flags = np.concatenate([np.zeros(t_sig.size, np.uint32)] +
                           [np.full(a.size, FLAG_DARK, np.uint32) for a in t_dark])
    ticks = np.rint(ts / tick).astype(np.uint64)
    order = np.lexsort((chans, ticks))
    ticks, chans, flags = ticks[order], chans[order], flags[order]
    if det.dead_time > 0:
        dead = int(round(det.dead_time * 1e-9 / tick))
        keep = np.ones(ticks.size, bool)
        for ch in (0, 1):
            idx = np.flatnonzero(chans == ch)
            keep[idx] = _dead_time_mask(ticks[idx].astype(np.int64), dead)
        ticks, chans, flags = ticks[keep], chans[keep], flags[keep]
    span_ticks = max(int(round(span / tick)), int(ticks[-1]) + 1 if ticks.size else 0)
    return TimeTagStream(ticks, chans, flags, time_unit_fs, span_ticks)


def simulate_g2_stream(m: EmitterModel, det: DetectorModel, duration, seed, p_resonant=100.0,
                       p_aboveband=32.0):
    """CW drive followed by detection; returns ``(stream, truth)``."""
    if not duration > 0:
        raise DomainError("duration must be > 0")
    seq = PulseSequence((Segment(duration, p_resonant, p_aboveband),))
    traj = simulate_trajectory(m, seq, seed)
    stream = detect(traj.emissions, det, duration, seed + 1)
    truth = {
        "emissions": int(traj.emissions.size),
        "emission_rate": traj.emissions.size / duration,
        "on_fraction": traj.on_time / duration,
        "counts": [int(c) for c in stream.counts_per_channel()],
        "dark_counts": int(np.count_nonzero(stream.flags & FLAG_DARK)),
        "efficiency": det.efficiency,
        "dark_rate": det.dark_rate,
        "k_on_per_ns": None if m.telegraph is None else m.telegraph.k_on,
        "k_off_per_ns": None if m.telegraph is None else m.telegraph.k_off,
        "duration_s": duration,
        "p_resonant": p_resonant,
        "p_aboveband": p_aboveband,
    }
    return stream, truth


def simulate_g2_experiment(m: EmitterModel, det: DetectorModel, duration, seed, p_resonant=100.0,
                           p_aboveband=32.0, bin_width=40.0, max_delay=20_000.0):
    """CW drive -> detection -> coincidence histogram.

    Returns ``(histogram, truth)`` where ``truth`` records the parameters the
    data were generated with.
    """
    stream, truth = simulate_g2_stream(m, det, duration, seed, p_resonant, p_aboveband)
    hist = coincidence_histogram(stream, bin_width=bin_width, max_delay=max_delay)
    return hist, truth


def poisson_stream(rate, span, seed, n_channels=2, time_unit_fs=1) -> TimeTagStream:
    """Independent homogeneous Poisson tags at ``rate`` per channel over ``span`` seconds."""
    if not (rate >= 0 and span > 0):
        raise DomainError("rate must be >= 0 and span > 0")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    tick = time_unit_fs / FS_PER_S
    ts, ch = [], []
    for c in range(n_channels):
        k = rng.poisson(rate * span)
        ts.append(np.rint(rng.random(k) * span / tick).astype(np.uint64))
        ch.append(np.full(k, c, np.uint32))
    ts, ch = np.concatenate(ts), np.concatenate(ch)
    order = np.lexsort((ch, ts))
    return TimeTagStream(ts[order], ch[order], None, time_unit_fs, int(round(span / tick)))
