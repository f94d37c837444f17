"""Charge-state rate equations for the bound exciton.

States are ``G`` (neutral donor, ground), ``X`` (bound exciton) and ``D``
(ionized donor). Populations are column vectors ordered (G, X, D) and the
generator ``Q`` satisfies ``dp/dt = Q p`` with ``Q[j, i]`` the i->j rate.

Channels:

* G -> X: resonant excitation ``k_exc_per_nw * p_res`` plus a weak above-band
  capture ``ab_capture_per_nw * p_ab / (1 + p_ab / ab_saturation_nw)``.
* X -> G: radiative decay ``gamma_rad``; every such event is a photon.
* X -> D: optically induced Auger ionization ``auger_per_nw * p_res``.
* D -> G: above-band recharge, interpolated log-log from a calibration table.
* G -> D: spontaneous discharge with Weibull hazard
  ``(beta/scale) * (c/scale)**(beta-1)``. The clock ``c`` is the time since the
  above-band light was last on; while it is on the clock is held at zero and
  the channel is closed.

All rates are in s^-1, times in s and powers in nW. The discharge scale is
stored in microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import expm

from .correlation import TelegraphRates
from .errors import CalibrationError, DomainError, IntegrationError
from .fitting import ModelSpec, lsq_fit

__all__ = [
    "G", "X", "D",
    "EmitterModel",
    "Segment",
    "PulseSequence",
    "TimeTrace",
    "PopulationTrace",
    "rate_generator",
    "steady_state",
    "slow_rate",
    "evolve",
    "discharge_survival",
    "discharge_clock",
    "calibrate_auger",
    "calibrate_recharge",
    "probe_sequence",
    "probe_decay_trace",
    "tau_e_sweep",
    "recovery_trace",
]

G, X, D = 0, 1, 2
POP_TOL = 1e-8


@dataclass(frozen=True)
class EmitterModel:
    gamma_rad: float = 1.0 / 192e-12
    k_exc_per_nw: float = 1.736e8
    ab_capture_per_nw: float = 1.2e6
    ab_saturation_nw: float = 2900.0
    auger_per_nw: float = 1.0e3
    recharge_per_nw: float = 1.0e5
    recharge_table: tuple = ()  # ((power_nw, rate_per_s), ...)
    discharge_scale_us: float | None = 21.0
    discharge_shape: float = 0.5
    telegraph: TelegraphRates | None = None

    def __post_init__(self):
        object.__setattr__(self, "recharge_table",
                           tuple(sorted((float(p), float(r)) for p, r in self.recharge_table)))
        if not self.gamma_rad > 0:
            raise DomainError("gamma_rad must be > 0")
        for name in ("k_exc_per_nw", "ab_capture_per_nw", "auger_per_nw", "recharge_per_nw"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if not self.ab_saturation_nw > 0:
            raise DomainError("ab_saturation_nw must be > 0")
        if not 0 < self.discharge_shape <= 1:
            raise DomainError("discharge_shape must lie in (0, 1]")
        if self.discharge_scale_us is not None and not self.discharge_scale_us > 0:
            raise DomainError("discharge_scale_us must be > 0 (or None to disable)")
        for p, r in self.recharge_table:
            if not (p > 0 and r > 0):
                raise DomainError("recharge table entries must be positive")

    @property
    def discharge_enabled(self):
        return self.discharge_scale_us is not None

    @property
    def discharge_scale(self):
        return None if self.discharge_scale_us is None else self.discharge_scale_us * 1e-6

    def excitation_rate(self, p_res, p_ab):
        capture = self.ab_capture_per_nw * p_ab / (1.0 + p_ab / self.ab_saturation_nw)
        return self.k_exc_per_nw * p_res + capture

    def recharge_rate(self, p_ab):
        if p_ab <= 0:
            return 0.0
        table = self.recharge_table
        if not table:
            return self.recharge_per_nw * p_ab
        if len(table) == 1:
            p1, r1 = table[0]
            return r1 * p_ab / p1
        lp = np.log([p for p, _ in table])
        lr = np.log([r for _, r in table])
        x = math.log(p_ab)
        # log-log interpolation, extrapolating with the end slopes
        if x <= lp[0]:
            k = 0
        elif x >= lp[-1]:
            k = len(lp) - 2
        else:
            k = int(np.searchsorted(lp, x)) - 1
        slope = (lr[k + 1] - lr[k]) / (lp[k + 1] - lp[k])
        return float(math.exp(lr[k] + slope * (x - lp[k])))

    def hazard_increment(self, c0, c1):
        """Integrated discharge hazard between clock values ``c0`` and ``c1`` (s)."""
        s, b = self.discharge_scale, self.discharge_shape
        return (c1 / s) ** b - (c0 / s) ** b


@dataclass(frozen=True)
class Segment:
    duration: float  # s
    p_resonant: float = 0.0  # nW
    p_aboveband: float = 0.0  # nW

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("segment duration must be > 0")
        if self.p_resonant < 0 or self.p_aboveband < 0:
            raise DomainError("powers must be >= 0")


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise DomainError("pulse sequence is empty")

    @classmethod
    def from_rows(cls, rows):
        """Build from ``(duration_us, p_resonant_nw, p_aboveband_nw)`` rows."""
        return cls(tuple(Segment(float(d) * 1e-6, float(pr), float(pa)) for d, pr, pa in rows))

    def to_rows(self):
        return [[s.duration * 1e6, s.p_resonant, s.p_aboveband] for s in self.segments]

    @property
    def boundaries(self):
        return np.concatenate(([0.0], np.cumsum([s.duration for s in self.segments])))

    @property
    def duration(self):
        return float(sum(s.duration for s in self.segments))


@dataclass
class TimeTrace:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.values.shape[0] != self.times.size:
            raise DomainError("times and values must have equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")


@dataclass
class PopulationTrace:
    times: np.ndarray
    populations: np.ndarray  # (n, 3)
    rf_intensity: np.ndarray  # photons/s, gamma_rad * X
    discharge_shape: float = 1.0
    meta: dict = field(default_factory=dict)

    def rf_trace(self) -> TimeTrace:
        return TimeTrace(self.times, self.rf_intensity)

    def window(self, t0, t1):
        m = (self.times >= t0) & (self.times <= t1)
        return PopulationTrace(self.times[m], self.populations[m], self.rf_intensity[m],
                               self.discharge_shape, dict(self.meta))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("time_s,pop_g,pop_x,pop_d,rf_intensity\n")
            for t, (g, x, d), rf in zip(self.times, self.populations, self.rf_intensity):
                fh.write(f"{t:.17g},{g:.17g},{x:.17g},{d:.17g},{rf:.17g}\n")


def rate_generator(p_res, p_ab, m: EmitterModel):
    """3x3 generator over (G, X, D) for constant powers; columns sum to zero.

    The time-dependent spontaneous discharge is not included here.
    """
    if p_res < 0 or p_ab < 0:
        raise DomainError("powers must be >= 0")
    Q = np.zeros((3, 3))
    Q[X, G] = m.excitation_rate(p_res, p_ab)
    Q[G, X] = m.gamma_rad
    Q[D, X] = m.auger_per_nw * p_res
    Q[G, D] = m.recharge_rate(p_ab)
    Q[np.diag_indices(3)] = -Q.sum(axis=0)
    return Q


def steady_state(Q):
    """Stationary distribution (null vector of Q normalized to unit sum)."""
    A = np.vstack([Q, np.ones(3)])
    b = np.array([0.0, 0.0, 0.0, 1.0])
    p, *_ = np.linalg.lstsq(A, b, rcond=None)
    return p


def slow_rate(Q):
    """Magnitude of the slowest non-zero relaxation eigenvalue of ``Q``."""
    ev = np.sort(np.abs(np.linalg.eigvals(Q).real))
    return float(ev[1])


def discharge_clock(seq: PulseSequence, clock0=0.0):
    """Clock value at the start of each segment (time since above-band was last on)."""
    out, c = [], clock0
    for s in seq.segments:
        if s.p_aboveband > 0:
            out.append(0.0)
            c = 0.0
        else:
            out.append(c)
            c += s.duration
    return np.asarray(out)


def discharge_survival(t_since_recharge, m: EmitterModel):
    t = np.asarray(t_since_recharge, dtype=float)
    if np.any(t < 0):
        raise DomainError("time since recharge must be >= 0")
    if not m.discharge_enabled:
        return np.ones_like(t) if t.ndim else 1.0
    out = np.exp(-(t / m.discharge_scale) ** m.discharge_shape)
    return float(out) if out.ndim == 0 else out


def _segment_grid(duration, dt):
    n = max(1, int(math.ceil(duration / dt - 1e-9)))
    return np.linspace(0.0, duration, n + 1)


def _rk4_step(Q, p, h):
    k1 = Q @ p
    k2 = Q @ (p + 0.5 * h * k1)
    k3 = Q @ (p + 0.5 * h * k2)
    k4 = Q @ (p + h * k3)
    return p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(seq: PulseSequence, m: EmitterModel, dt, initial=(1.0, 0.0, 0.0), clock0=0.0,
           method="expm") -> PopulationTrace:
    """Integrate the populations through ``seq`` and sample them every ``dt``.

    Each segment is sampled on its own grid (endpoints included once). With
    ``method="expm"`` constant segments are propagated exactly with matrix
    exponentials; segments where the discharge clock runs use one exponential
    per step with the exact hazard integral over that step. ``method="rk4"``
    uses classical Runge-Kutta with the same per-step hazard and requires
    ``dt * max|rate| < 0.1``.
    """
    if not dt > 0:
        raise DomainError("dt must be > 0")
    if method not in ("expm", "rk4"):
        raise DomainError(f"unknown method {method!r}")
    p = np.asarray(initial, dtype=float).copy()
    if p.shape != (3,) or abs(p.sum() - 1) > POP_TOL or np.any(p < 0):
        raise DomainError("initial populations must be a probability vector of length 3")
    clocks = discharge_clock(seq, clock0)
    t_out, p_out = [np.array([0.0])], [p[None, :]]
    t_start = 0.0
    E = np.zeros((3, 3))
    E[D, G], E[G, G] = 1.0, -1.0
    for seg, c0 in zip(seq.segments, clocks):
        Q = rate_generator(seg.p_resonant, seg.p_aboveband, m)
        grid = _segment_grid(seg.duration, dt)
        steps = np.diff(grid)
        hazard = m.discharge_enabled and seg.p_aboveband == 0
        if method == "rk4":
            h_max = float(steps.max())
            peak = float(np.max(np.abs(np.diag(Q))))
            if h_max * peak >= 0.1:
                raise DomainError("rk4 needs dt * max|rate| < 0.1")
        if hazard:
            dH = m.hazard_increment(c0 + grid[:-1], c0 + grid[1:])
            Qk = Q[None, :, :] + (dH / steps)[:, None, None] * E[None, :, :]
        if method == "expm":
            if hazard:
                Ms = expm(Qk * steps[:, None, None])
                pts = np.empty((steps.size, 3))
                for k in range(steps.size):
                    p = Ms[k] @ p
                    pts[k] = p
            else:
                Ms = expm(Q[None, :, :] * grid[1:, None, None])
                pts = Ms @ p
                p = pts[-1].copy()
        else:
            pts = np.empty((steps.size, 3))
            for k in range(steps.size):
                p = _rk4_step(Qk[k] if hazard else Q, p, steps[k])
                pts[k] = p
        t_out.append(t_start + grid[1:])
        p_out.append(pts)
        t_start += seg.duration
    times = np.concatenate(t_out)
    pops = np.vstack(p_out)
    if np.any(pops < -POP_TOL) or np.any(pops > 1 + POP_TOL) or \
            np.any(np.abs(pops.sum(axis=1) - 1) > POP_TOL):
        raise IntegrationError("populations left [0, 1] or lost normalization")
    return PopulationTrace(times, pops, m.gamma_rad * pops[:, X], m.discharge_shape)


def _bisect_log(f, target, lo, hi, what, rtol=1e-12):
    """Solve increasing ``f(v) = target`` for ``v`` in ``(lo, hi)``, growing ``hi``."""
    for _ in range(200):
        if f(hi) >= target:
            break
        lo, hi = hi, hi * 4.0
    else:
        raise CalibrationError(f"could not bracket {what}")
    if f(lo) > target:
        raise CalibrationError(f"{what}: target below the lower bracket")
    for _ in range(400):
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def calibrate_auger(observed_decay_rate, p_res, m: EmitterModel):
    """``auger_per_nw`` whose probe-segment slow eigenvalue equals the observed rate."""
    if not (observed_decay_rate > 0 and p_res > 0):
        raise DomainError("decay rate and power must be > 0")

    def rate(a):
        return slow_rate(rate_generator(p_res, 0.0, replace(m, auger_per_nw=a)))

    # the slow rate is bounded by the X occupancy; a huge coefficient that still
    # misses the target means no root exists
    return _bisect_log(rate, observed_decay_rate, 0.0, observed_decay_rate / p_res, "auger_per_nw")


def calibrate_recharge(recovery_time, p_ab, p_res, m: EmitterModel):
    """Recharge rate (s^-1) giving a rise time ``recovery_time`` at ``(p_res, p_ab)``."""
    if not (recovery_time > 0 and p_ab > 0 and p_res >= 0):
        raise DomainError("recovery time and above-band power must be > 0")
    target = 1.0 / recovery_time

    def rate(r):
        mm = replace(m, recharge_table=(), recharge_per_nw=r / p_ab)
        return slow_rate(rate_generator(p_res, p_ab, mm))

    return _bisect_log(rate, target, 0.0, target, "recharge rate")


def probe_sequence(delay, charge_duration=5e-6, charge_power=40.0, probe_duration=4e-6,
                   probe_power=1000.0):
    """Above-band charging pulse, dark delay, resonant probe."""
    return PulseSequence((Segment(charge_duration, 0.0, charge_power),
                          Segment(delay, 0.0, 0.0),
                          Segment(probe_duration, probe_power, 0.0)))


def probe_decay_trace(m: EmitterModel, delay=1.2e-6, probe_power=1000.0, dt=2e-9, **kw):
    """Full charge/delay/probe evolution; ``meta['probe_start']`` marks the probe."""
    seq = probe_sequence(delay, probe_power=probe_power, **kw)
    tr = evolve(seq, m, dt, initial=(0.0, 0.0, 1.0))
    tr.meta["probe_start"] = float(seq.boundaries[2])
    tr.meta["probe_stop"] = float(seq.boundaries[3])
    return tr


def tau_e_sweep(m: EmitterModel, delays, probe_power=1000.0, dt=2e-9, **kw) -> TimeTrace:
    """Integrated probe RF (photons) versus delay after the charging pulse."""
    out = []
    for delay in delays:
        tr = probe_decay_trace(m, delay, probe_power, dt, **kw)
        probe = tr.window(tr.meta["probe_start"], tr.meta["probe_stop"])
        out.append(trapezoid(probe.rf_intensity, probe.times))
    return TimeTrace(np.asarray(delays, dtype=float), np.asarray(out))


def recovery_trace(p_ab, m: EmitterModel, p_res=1000.0, n_points=2000):
    """Rise of the RF from a fully ionized start once the above-band laser turns on.

    Returns ``(TimeTrace, tau_s, FitResult)`` where ``tau_s`` comes from an
    ``I0 * (1 - exp(-t/tau))`` fit.
    """
    if not p_ab > 0:
        raise DomainError("above-band power must be > 0")
    lam = slow_rate(rate_generator(p_res, p_ab, m))
    duration = 8.0 / lam
    seq = PulseSequence((Segment(duration, p_res, p_ab),))
    tr = evolve(seq, m, duration / n_points, initial=(0.0, 0.0, 1.0))
    # fit in ns for conditioning
    t_ns = tr.times * 1e9
    y = tr.rf_intensity
    spec = ModelSpec("exp_rise", [y.max(), 1e9 / lam], lower=[0.0, 1e-6])
    fit = lsq_fit(spec, t_ns, y)
    if not fit.converged:
        raise CalibrationError(f"recovery fit failed: {fit.message}")
    return tr.rf_trace(), fit["tau"] * 1e-9, fit
