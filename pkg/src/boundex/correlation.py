"""Second-order correlation models and the coincidence histogram estimator.

Times in the model functions are in whatever unit ``tau0``/``tau1`` use (ns by
convention). Histogram bin widths and delays are in ps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .timetags import TimeTagStream

__all__ = [
    "G2Params",
    "TelegraphRates",
    "CoincidenceHistogram",
    "BackgroundClampWarning",
    "g2_short",
    "g2_long",
    "g2_total",
    "telegraph_rates",
    "telegraph_params",
    "markov_telegraph_rates",
    "background_correct",
    "background_mix",
    "estimate_R",
    "estimate_R_from_total",
    "coincidence_histogram",
]


class BackgroundClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class G2Params:
    q0: float
    tau0: float
    bunch_ratio: float
    tau1: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.q0 < 0 or self.bunch_ratio < 0:
            raise DomainError("q0 and bunch_ratio must be >= 0")
        if not (self.tau0 > 0 and self.tau1 > 0 and self.amplitude > 0):
            raise DomainError("tau0, tau1 and amplitude must be > 0")


@dataclass(frozen=True)
class TelegraphRates:
    """Switching rates of the emissive (ON) / dark (OFF) telegraph, in ns^-1.

    ``k_on`` is the OFF->ON rate, ``k_off`` the ON->OFF rate.
    """

    k_on: float
    k_off: float

    def __post_init__(self):
        if not (self.k_on > 0 and self.k_off > 0):
            raise DomainError("telegraph rates must be strictly positive")

    @property
    def on_fraction(self):
        return self.k_on / (self.k_on + self.k_off)

    @property
    def correlation_time(self):
        """Decay time of the ON/OFF autocorrelation of a two-state Markov process."""
        return 1.0 / (self.k_on + self.k_off)


def g2_short(tau, q0, tau0):
    if not tau0 > 0:
        raise DomainError("tau0 must be > 0")
    return 1.0 - (1.0 - q0) * np.exp(-np.abs(tau) / tau0)


def g2_long(tau, bunch_ratio, tau1):
    if not tau1 > 0:
        raise DomainError("tau1 must be > 0")
    return 1.0 + bunch_ratio * np.exp(-np.abs(tau) / tau1)


def g2_total(tau, p: G2Params):
    return p.amplitude * g2_short(tau, p.q0, p.tau0) * g2_long(tau, p.bunch_ratio, p.tau1)


def telegraph_rates(tau1, bunch_ratio) -> TelegraphRates:
    """Rates satisfying ``tau1 = 1/k_on + 1/k_off`` and ``k_off/k_on = bunch_ratio``."""
    if not tau1 > 0:
        raise DomainError("tau1 must be > 0")
    if not bunch_ratio > 0:
        raise DomainError("bunch_ratio must be > 0 for a finite k_off")
    k_on = (1.0 + 1.0 / bunch_ratio) / tau1
    return TelegraphRates(k_on, bunch_ratio * k_on)


def telegraph_params(rates: TelegraphRates):
    """Inverse of :func:`telegraph_rates`: returns ``(tau1, bunch_ratio)``."""
    return 1.0 / rates.k_on + 1.0 / rates.k_off, rates.k_off / rates.k_on


def markov_telegraph_rates(corr_time, bunch_ratio) -> TelegraphRates:
    """Rates whose two-state Markov autocorrelation decays with ``corr_time``.

    A telegraph process with these rates produces ``1 + bunch_ratio *
    exp(-|tau|/corr_time)`` bunching, which is what the simulator needs to
    reproduce a measured bunching time.
    """
    if not (corr_time > 0 and bunch_ratio > 0):
        raise DomainError("corr_time and bunch_ratio must be > 0")
    total = 1.0 / corr_time
    k_on = total / (1.0 + bunch_ratio)
    return TelegraphRates(k_on, total - k_on)


def background_correct(g2_measured, signal_fraction):
    """Remove uncorrelated background: ``(g2 - (1 - R**2)) / R**2``.

    Negative results are clamped to 0 and a :class:`BackgroundClampWarning`
    is emitted.
    """
    R = float(signal_fraction)
    if not (0 < R <= 1):
        raise DomainError(f"signal fraction must be in (0, 1], got {R!r}")
    r2 = R * R
    out = (np.asarray(g2_measured, dtype=float) - (1.0 - r2)) / r2
    if np.any(out < 0):
        warnings.warn("background-corrected g2 was negative; clamped to 0",
                      BackgroundClampWarning, stacklevel=2)
        out = np.clip(out, 0.0, None)
    return float(out) if out.ndim == 0 else out


def background_mix(g2_signal, signal_fraction):
    """Forward model of :func:`background_correct`."""
    r2 = float(signal_fraction) ** 2
    return r2 * np.asarray(g2_signal, dtype=float) + (1.0 - r2)


def estimate_R(signal_rate, background_rate):
    """Signal fraction ``S / (S + B)`` from separate signal and background rates."""
    if signal_rate < 0 or background_rate < 0:
        raise DomainError("rates must be >= 0")
    total = signal_rate + background_rate
    if total <= 0:
        raise DomainError("signal + background must be > 0")
    return signal_rate / total


def estimate_R_from_total(total_rate, background_rate):
    """Signal fraction when ``total_rate`` already includes the background."""
    if not 0 <= background_rate <= total_rate:
        raise DomainError("need 0 <= background_rate <= total_rate")
    return estimate_R(total_rate - background_rate, background_rate)


@dataclass
class CoincidenceHistogram:
    bin_width: float  # ps
    delays: np.ndarray  # bin centers, ps
    counts: np.ndarray
    normalization: float  # expected accidental coincidences per bin

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.delays.shape != self.counts.shape:
            raise DomainError("delays and counts must have equal length")
        if not self.bin_width > 0:
            raise DomainError("bin_width must be > 0")
        if np.any(self.counts < 0):
            raise DomainError("counts must be non-negative")

    @property
    def g2(self):
        if not self.normalization > 0:
            raise DomainError("normalization must be > 0 to form g2")
        return self.counts / self.normalization

    def __add__(self, other):
        if not isinstance(other, CoincidenceHistogram):
            return NotImplemented
        if self.bin_width != other.bin_width or not np.array_equal(self.delays, other.delays):
            raise DomainError("histograms have different binning")
        return CoincidenceHistogram(self.bin_width, self.delays, self.counts + other.counts,
                                    self.normalization + other.normalization)

    def to_csv(self, path):
        g2 = self.g2 if self.normalization > 0 else np.full(self.counts.shape, np.nan)
        with open(path, "w") as fh:
            fh.write("delay_ps,counts,g2_normalized\n")
            for d, c, g in zip(self.delays, self.counts, g2):
                fh.write(f"{d:.17g},{c},{g:.17g}\n")

    @classmethod
    def from_csv(cls, path, normalization=None):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        delays, counts = data[:, 0], data[:, 1].astype(np.int64)
        bw = float(np.median(np.diff(delays))) if delays.size > 1 else 1.0
        if normalization is None:
            nz = data[:, 2] > 0
            normalization = float(np.median(counts[nz] / data[nz, 2])) if nz.any() else 0.0
        return cls(bw, delays, counts, normalization)


def _pair_bins(t0, t1, half_window, bin_ticks, n_side):
    """Histogram of all pair delays ``t1 - t0`` with ``|delay| <= half_window``.

    Bins are symmetric about zero: index ``sign(d) * floor((|d| + bin/2) / bin)``,
    so swapping the channels mirrors the histogram exactly.
    """
    hist = np.zeros(2 * n_side + 1, dtype=np.int64)
    lo = np.searchsorted(t1, t0 - half_window, side="left")
    hi = np.searchsorted(t1, t0 + half_window, side="right")
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        return hist
    starts = np.repeat(lo - np.concatenate(([0], np.cumsum(n)[:-1])), n)
    j = starts + np.arange(total)
    d = t1[j] - np.repeat(t0, n)
    half_bin = bin_ticks // 2
    k = np.sign(d) * ((np.abs(d) + half_bin) // bin_ticks)
    k = k[np.abs(k) <= n_side]
    hist += np.bincount(k + n_side, minlength=2 * n_side + 1)
    return hist


def coincidence_histogram(stream: TimeTagStream, bin_width=40.0, max_delay=20_000.0,
                          channels=(0, 1), chunk=1 << 16) -> CoincidenceHistogram:
    """Start-stop cross-correlation between two channels (all pairs, not first-stop).

    ``bin_width`` and ``max_delay`` are in ps and must be whole multiples of
    the stream's tick. The start channel is processed in chunks of ``chunk``
    tags and the partial histograms are summed, which is exact because every
    chunk sees the complete stop channel.
    """
    if not bin_width > 0:
        raise DomainError("bin_width must be > 0")
    tick_ps = stream.time_unit_fs * 1e-3
    bin_ticks = int(round(bin_width / tick_ps))
    if bin_ticks < 2 or abs(bin_ticks * tick_ps - bin_width) > 1e-9 * bin_width:
        raise DomainError("bin_width must be a multiple of (at least two) stream ticks")
    n_side = int(math.floor(max_delay / bin_width + 1e-9))
    half_window = n_side * bin_ticks + bin_ticks // 2
    t0 = stream.channel(channels[0])
    t1 = stream.channel(channels[1])
    if t0.size == 0 or t1.size == 0:
        raise DomainError("both channels need at least one tag")
    hist = np.zeros(2 * n_side + 1, dtype=np.int64)
    for s in range(0, t0.size, chunk):
        hist += _pair_bins(t0[s:s + chunk], t1, half_window, bin_ticks, n_side)
    span_s = stream.span_s
    if not span_s > 0:
        raise DomainError("stream span must be positive")
    norm = t0.size * t1.size * (bin_ticks * stream.time_unit_fs * 1e-15) / span_s
    delays = np.arange(-n_side, n_side + 1) * (bin_ticks * tick_ps)
    return CoincidenceHistogram(bin_ticks * tick_ps, delays, hist, norm)
