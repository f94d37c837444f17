"""Per-figure fit recipes: default starting values, weighting and headline numbers.

Figure ids and the data they expect:

==== ===================== ==================== ==========================
id   trace                 model                headline
==== ===================== ==================== ==========================
2b   SpectrumTrace (eV)    lorentz_plus_gauss   ``f_dw``
2c   SpectrumTrace (eV)    voigt                ``linewidth_ev``
2d   CoincidenceHistogram  g2_combined          ``q0`` (raw)
2e   CoincidenceHistogram  g2_combined          ``bunch_ratio``, ``tau1_ns``
4a   TimeTrace (s)         exp_decay            ``rate_per_us``
4c   TimeTrace (s)         stretched_exp        ``scale_us``
4d   TimeTrace (s)         exp_rise             ``tau_ns``
==== ===================== ==================== ==========================
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import trapezoid

from .correlation import CoincidenceHistogram, background_correct
from .dynamics import TimeTrace
from .errors import DomainError
from .fitting import FitResult, ModelSpec, lsq_fit, poisson_weights
from .spectral import SpectrumTrace, debye_waller, voigt_fwhm

__all__ = ["FIGURES", "fit_figure", "empirical_fwhm"]

FIGURES = ("2b", "2c", "2d", "2e", "4a", "4c", "4d")


def empirical_fwhm(x, y):
    """Width of the region around the maximum where ``y`` exceeds half of it."""
    i = int(np.argmax(y))
    half = y[i] / 2.0
    lo = i
    while lo > 0 and y[lo - 1] > half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi + 1] > half:
        hi += 1
    left, right = float(x[lo]), float(x[hi])
    # linear interpolation of the half-maximum crossings
    if lo > 0:
        left = float(np.interp(half, [y[lo - 1], y[lo]], [x[lo - 1], x[lo]]))
    if hi < y.size - 1:
        right = float(np.interp(half, [y[hi + 1], y[hi]], [x[hi + 1], x[hi]]))
    step = np.median(np.diff(x)) if x.size > 1 else 1.0
    return max(right - left, float(step))


def _spectrum_weights(y):
    # variance proportional to the signal, floored to keep empty bins finite
    return 1.0 / np.maximum(y, 0.01 * np.max(y))


def _fit_2b(tr: SpectrumTrace, **kw):
    x, y = tr.energies, tr.intensities
    i = int(np.argmax(y))
    c_l, fw_l = x[i], empirical_fwhm(x, y)
    area_l = y[i] * math.pi * fw_l / 2.0
    lor = area_l * (fw_l / (2 * math.pi)) / ((x - c_l) ** 2 + (fw_l / 2) ** 2)
    rest = np.clip(y - lor, 0.0, None)
    area_g = max(float(trapezoid(rest, x)), 1e-6 * area_l)
    c_g = float(np.sum(rest * x) / np.sum(rest)) if rest.sum() > 0 else c_l
    sd = float(np.sqrt(np.sum(rest * (x - c_g) ** 2) / rest.sum())) if rest.sum() > 0 else fw_l
    fw_g = max(2.3548 * sd, 2 * fw_l)
    span = x[-1] - x[0]
    spec = ModelSpec("lorentz_plus_gauss", [area_l, c_l, fw_l, area_g, c_g, fw_g],
                     lower=[0, x[0], 1e-3 * fw_l, 0, x[0], 1e-3 * fw_l],
                     upper=[np.inf, x[-1], span, np.inf, x[-1], span],
                     weights=kw.get("weights", _spectrum_weights(y)))
    fit = lsq_fit(spec, x, y)
    fit.headline = {"f_dw": debye_waller(fit["area_l"], fit["area_g"])}
    return fit


def _fit_2c(tr: SpectrumTrace, **kw):
    x, y = tr.energies, tr.intensities
    i = int(np.argmax(y))
    fw = empirical_fwhm(x, y)
    span = x[-1] - x[0]
    spec = ModelSpec("voigt", [y[i] * math.pi * fw / 2.0, x[i], 0.7 * fw, 0.3 * fw],
                     lower=[0, x[0], 1e-4 * fw, 1e-4 * fw], upper=[np.inf, x[-1], span, span],
                     weights=kw.get("weights", _spectrum_weights(y)))
    fit = lsq_fit(spec, x, y)
    fit.headline = {"linewidth_ev": fit["lorentz_fwhm"],
                    "voigt_fwhm_ev": voigt_fwhm(fit["lorentz_fwhm"], fit["gauss_fwhm"])}
    return fit


def _g2_start(t_ns, g):
    far = np.abs(t_ns) > 0.75 * np.abs(t_ns).max()
    amp = float(np.median(g[far])) if far.any() else float(np.median(g))
    amp = amp if amp > 0 else 1.0
    centre = np.argsort(np.abs(t_ns))[:3]
    q0 = float(np.clip(g[centre].min() / amp, 0.0, 0.99))
    plateau = (np.abs(t_ns) > 0.5) & (np.abs(t_ns) < 1.5)
    b = float(np.clip(np.mean(g[plateau]) / amp - 1.0, 1e-3, 10.0)) if plateau.any() else 0.2
    tail = (np.abs(t_ns) > 0.5) & (np.abs(t_ns) < 0.5 * np.abs(t_ns).max())
    excess = g[tail] / amp - 1.0
    ok = excess > 0
    tau1 = 1.0
    if ok.sum() > 3:
        slope = np.polyfit(np.abs(t_ns[tail][ok]), np.log(excess[ok]), 1)[0]
        if slope < 0:
            tau1 = float(np.clip(-1.0 / slope, 0.05, 0.5 * np.abs(t_ns).max()))
    step = float(np.median(np.diff(t_ns)))
    return [amp, q0, max(step, 1e-3), b, tau1]


def _fit_g2(h: CoincidenceHistogram, **kw):
    t_ns = h.delays * 1e-3
    g = h.g2
    p0 = _g2_start(t_ns, g)
    T = np.abs(t_ns).max()
    spec = ModelSpec("g2_combined", p0, lower=[0, 0, 1e-4, 0, 1e-3], upper=[np.inf, 1.0, T, 100, 10 * T],
                     weights=kw.get("weights", poisson_weights(h.counts) * h.normalization ** 2))
    fit = lsq_fit(spec, t_ns, g)
    head = {"q0": fit["q0"], "bunch_ratio": fit["bunch_ratio"], "tau1_ns": fit["tau1"],
            "tau0_ns": fit["tau0"]}
    R = kw.get("signal_fraction")
    if R is not None:
        head["q0_corrected"] = background_correct(fit["q0"], R)
    fit.headline = head
    return fit


def _fit_4a(tr: TimeTrace, **kw):
    t_us = (tr.times - tr.times[0]) * 1e6
    y = tr.values
    ok = y > 0
    slope = np.polyfit(t_us[ok], np.log(y[ok]), 1)[0] if ok.sum() > 2 else -1.0
    rate = -slope if slope < 0 else 1.0
    spec = ModelSpec("exp_decay", [float(y.max()), rate], lower=[0, 0])
    fit = lsq_fit(spec, t_us, y)
    fit.headline = {"rate_per_us": fit["rate"]}
    return fit


def _fit_4c(tr: TimeTrace, beta=0.5, free_beta=False, **kw):
    t_us = tr.times * 1e6
    y = tr.values
    # scale from where the signal has dropped to 1/e of its extrapolated start
    target = y[0] / math.e
    below = np.flatnonzero(y < target)
    scale = float(t_us[below[0]]) if below.size else float(t_us[-1])
    spec = ModelSpec("stretched_exp", [float(y[0]) * 1.2, max(scale, 1e-3), beta],
                     lower=[0, 1e-6, 0.05], upper=[np.inf, np.inf, 1.0],
                     fixed=[False, False, not free_beta])
    fit = lsq_fit(spec, t_us, y)
    fit.headline = {"scale_us": fit["scale"], "beta": fit["beta"]}
    return fit


def _fit_4d(tr: TimeTrace, **kw):
    t_ns = (tr.times - tr.times[0]) * 1e9
    y = tr.values
    plateau = float(np.mean(y[-max(1, y.size // 10):]))
    rise = np.flatnonzero(y >= (1 - 1 / math.e) * plateau)
    tau = float(t_ns[rise[0]]) if rise.size and t_ns[rise[0]] > 0 else float(t_ns[-1]) / 5
    spec = ModelSpec("exp_rise", [plateau, tau], lower=[0.0, 1e-6])
    fit = lsq_fit(spec, t_ns, y)
    fit.headline = {"tau_ns": fit["tau"]}
    return fit


_DISPATCH = {
    "2b": (SpectrumTrace, _fit_2b),
    "2c": (SpectrumTrace, _fit_2c),
    "2d": (CoincidenceHistogram, _fit_g2),
    "2e": (CoincidenceHistogram, _fit_g2),
    "4a": (TimeTrace, _fit_4a),
    "4c": (TimeTrace, _fit_4c),
    "4d": (TimeTrace, _fit_4d),
}


def fit_figure(figure_id, trace, **options) -> FitResult:
    """Fit ``trace`` with the recipe for ``figure_id``; see the module table.

    Options: ``weights`` (override), ``signal_fraction`` (g2 figures, adds the
    background-corrected q0), ``beta`` and ``free_beta`` (4c).
    """
    if figure_id not in _DISPATCH:
        raise DomainError(f"unknown figure id {figure_id!r}; expected one of {FIGURES}")
    kind, fn = _DISPATCH[figure_id]
    if not isinstance(trace, kind):
        raise DomainError(f"figure {figure_id} expects a {kind.__name__}")
    return fn(trace, **options)
