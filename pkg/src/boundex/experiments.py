"""Synthetic data generators for each measurement, driven by the preset."""

from __future__ import annotations

import math

import numpy as np

from . import spectral
from .dynamics import (TimeTrace, probe_decay_trace, rate_generator, recovery_trace,
                       steady_state, tau_e_sweep)
from .figures import fit_figure
from .interferometry import interferogram, interferogram_map
from .correlation import coincidence_histogram
from .montecarlo import simulate_g2_stream
from .preset import ASSUMPTIONS, PAPER, g2_detector, paper_model, paper_scatterer, paper_spectrum_params

__all__ = [
    "TAU_E_DELAYS_US",
    "spectrum_grid",
    "emission_spectrum",
    "resonant_scan",
    "g2_histogram_stream",
    "g2_histogram",
    "probe_decay",
    "tau_e_trace",
    "recovery",
    "interference",
    "interference_map",
]

TAU_E_DELAYS_US = (0.5, 1, 2, 5, 10, 20, 50, 100, 200)


def spectrum_grid(preset=PAPER, step=20e-6, below=8e-3, above=7e-3):
    e0 = float(preset.zpl_energy)
    n = int(round((below + above) / step))
    return e0 - below + step * np.arange(n + 1)


def emission_spectrum(seed, noise=0.02, preset=PAPER, assume=ASSUMPTIONS):
    """ZPL + sideband with shot-noise-like noise ``noise * sqrt(peak * model)``."""
    zpl, psb = paper_spectrum_params(preset, assume)
    grid = spectrum_grid(preset)
    model = spectral.lorentzian(grid, zpl) + spectral.gaussian(grid, psb)
    rms = noise * np.sqrt(model.max() * model)
    return spectral.synth_spectrum(zpl, psb, grid, rms, seed)


def resonant_scan(seed, noise=0.01, preset=PAPER, assume=ASSUMPTIONS):
    """Voigt line (Lorentzian width = reported linewidth) across +-1 meV with shot-like noise."""
    e0 = float(preset.zpl_energy)
    p = spectral.LineshapeParams(e0, float(preset.voigt_linewidth), assume.scan_gauss_fwhm_ev, 1.0)
    grid = e0 + np.linspace(-1e-3, 1e-3, 401)
    model = spectral.voigt(grid, p)
    rng = np.random.default_rng(seed)
    rms = noise * np.sqrt(model.max() * model)
    y = np.clip(model + rms * rng.standard_normal(grid.size), 0.0, None)
    return spectral.SpectrumTrace(grid, y)


def g2_histogram_stream(seed, preset=PAPER, assume=ASSUMPTIONS, model=None, detector=None,
                        duration=None):
    """Detected tags of a simulated CW correlation run; returns ``(stream, truth)``."""
    m = paper_model(preset, assume) if model is None else model
    p_res, p_ab = float(preset.g2_power), float(preset.stabilize_power)
    if detector is None:
        pops = steady_state(rate_generator(p_res, p_ab, m))
        on = 1.0 if m.telegraph is None else m.telegraph.on_fraction
        detector = g2_detector(m.gamma_rad * pops[1] * on, preset, assume)
    duration = assume.g2_sim_duration_s if duration is None else duration
    return simulate_g2_stream(m, detector, duration, seed, p_res, p_ab)


def g2_histogram(seed, preset=PAPER, assume=ASSUMPTIONS, model=None, detector=None,
                 duration=None, max_delay=20_000.0):
    """Simulated CW correlation run; returns ``(histogram, truth)``."""
    stream, truth = g2_histogram_stream(seed, preset, assume, model, detector, duration)
    hist = coincidence_histogram(stream, bin_width=float(preset.bin_width) * 1e12,
                                 max_delay=max_delay)
    return hist, truth


def probe_decay(model=None, probe_power=None, preset=PAPER, assume=ASSUMPTIONS, skip=20e-9):
    """RF during the probe pulse after the reported delay, with the fast turn-on removed."""
    m = paper_model(preset, assume) if model is None else model
    pw = assume.probe_power_nw if probe_power is None else probe_power
    tr = probe_decay_trace(m, float(preset.probe_delay), pw,
                           charge_duration=float(preset.charge_pulse),
                           charge_power=float(preset.charge_power),
                           probe_duration=float(preset.probe_pulse))
    w = tr.window(tr.meta["probe_start"] + skip, tr.meta["probe_stop"])
    return TimeTrace(w.times - tr.meta["probe_start"], w.rf_intensity)


def tau_e_trace(model=None, delays_us=TAU_E_DELAYS_US, preset=PAPER, assume=ASSUMPTIONS):
    m = paper_model(preset, assume) if model is None else model
    return tau_e_sweep(m, np.asarray(delays_us, float) * 1e-6, assume.probe_power_nw,
                       charge_duration=float(preset.charge_pulse),
                       charge_power=float(preset.charge_power),
                       probe_duration=float(preset.probe_pulse))


def recovery(p_ab, model=None, preset=PAPER, assume=ASSUMPTIONS):
    """``(trace, fit)`` for the RF recovery under above-band power ``p_ab``."""
    m = paper_model(preset, assume) if model is None else model
    trace, _, _ = recovery_trace(p_ab, m, assume.probe_power_nw)
    return trace, fit_figure("4d", trace)


def interference(dtheta_deg, power, detunings_gamma=None, preset=PAPER, assume=ASSUMPTIONS,
                 extinction=None):
    p = paper_scatterer(preset, assume)
    if detunings_gamma is None:
        detunings_gamma = np.linspace(-20, 20, 801)
    d = np.asarray(detunings_gamma, float) * p.gamma
    return interferogram(d, math.radians(dtheta_deg), power, p, finite_extinction=extinction)


def interference_map(dthetas_deg, power, detunings_gamma=None, preset=PAPER, assume=ASSUMPTIONS):
    p = paper_scatterer(preset, assume)
    if detunings_gamma is None:
        detunings_gamma = np.linspace(-20, 20, 401)
    d = np.asarray(detunings_gamma, float) * p.gamma
    dts = np.radians(np.asarray(dthetas_deg, float))
    return d, dts, interferogram_map(d, dts, power, p)
