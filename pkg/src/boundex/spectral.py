"""Lineshapes for the zero-phonon line and phonon sideband.

All energies are in eV. Every profile is area-normalized and scaled by
``LineshapeParams.area``, so integrating a profile over a wide window returns
its area.

The Voigt profile is evaluated through the real part of the Faddeeva function
w(z) using Humlicek's four-region rational approximation (W4, 1982), which is
accurate to about 1e-4 relative. The approximant is written as explicit
polynomial ratios so its complex derivative is available in closed form; the
fitting module uses that for analytic Jacobians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .constants import HBAR_EV_S
from .errors import DomainError

__all__ = [
    "LineshapeParams",
    "SpectrumTrace",
    "lifetime_limited_linewidth",
    "lorentzian",
    "gaussian",
    "voigt",
    "voigt_fwhm",
    "faddeeva",
    "faddeeva_with_derivative",
    "debye_waller",
    "synth_spectrum",
]

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class LineshapeParams:
    center: float
    lorentz_fwhm: float = 0.0
    gauss_fwhm: float = 0.0
    area: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.center):
            raise DomainError("center must be finite")
        for name in ("lorentz_fwhm", "gauss_fwhm", "area"):
            v = getattr(self, name)
            if not (v >= 0.0) or not math.isfinite(v):
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass
class SpectrumTrace:
    energies: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.intensities = np.asarray(self.intensities, dtype=float)
        if self.energies.ndim != 1 or self.energies.shape != self.intensities.shape:
            raise DomainError("energies and intensities must be 1-D arrays of equal length")
        if self.energies.size and np.any(np.diff(self.energies) <= 0):
            raise DomainError("energies must be strictly increasing")

    def to_csv(self, path):
        rows = np.column_stack([self.energies, self.intensities])
        np.savetxt(path, rows, delimiter=",", header="energy_ev,intensity",
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def lifetime_limited_linewidth(tau_rad):
    """Transform-limited FWHM ``h / (2 pi tau_rad)`` in eV for a lifetime in seconds."""
    tau_rad = float(tau_rad)
    if not tau_rad > 0:
        raise DomainError(f"tau_rad must be positive, got {tau_rad!r}")
    return HBAR_EV_S / tau_rad


def lorentzian(x, p: LineshapeParams):
    if p.lorentz_fwhm <= 0:
        raise DomainError("lorentzian needs lorentz_fwhm > 0")
    hw = 0.5 * p.lorentz_fwhm
    d = np.asarray(x, dtype=float) - p.center
    return p.area * hw / (math.pi * (d * d + hw * hw))


def gaussian(x, p: LineshapeParams):
    if p.gauss_fwhm <= 0:
        raise DomainError("gaussian needs gauss_fwhm > 0")
    sigma = p.gauss_fwhm * _FWHM_TO_SIGMA
    d = np.asarray(x, dtype=float) - p.center
    return p.area * np.exp(-0.5 * (d / sigma) ** 2) / (sigma * _SQRT2PI)


# Humlicek W4 regions as polynomial ratios in t = y - i x (u = t**2 in II/IV).
_P = Polynomial
_R1 = (_P([0.0, 0.5641896]), _P([0.5, 0.0, 1.0]))
_R2 = (_P([0.0, 1.410474, 0.0, 0.5641896]), _P([0.75, 0.0, 3.0, 0.0, 1.0]))
_R3 = (_P([16.4955, 20.20933, 11.96482, 3.778987, 0.5642236]),
       _P([16.4955, 38.82363, 39.27121, 21.69274, 6.699398, 1.0]))


def _even(coeffs):
    # polynomial in u = t**2 -> polynomial in t
    out = np.zeros(2 * len(coeffs) - 1)
    out[::2] = coeffs
    return _P(out)


_R4 = (_P([0.0, 1.0]) * _even([36183.31, -3321.9905, 1540.787, -219.0313,
                               35.76683, -1.320522, 0.56419]),
       _even([32066.6, -24322.84, 9022.228, -2186.181, 364.2191,
              -61.57037, 1.841439, -1.0]))
_REGIONS = [(num, den, num.deriv(), den.deriv()) for num, den in (_R1, _R2, _R3, _R4)]


def _region_index(x, y):
    s = np.abs(x) + y
    idx = np.full(x.shape, 3, dtype=np.int8)
    idx[y >= 0.195 * np.abs(x) - 0.176] = 2
    idx[s >= 5.5] = 1
    idx[s >= 15.0] = 0
    return idx


def faddeeva_with_derivative(z):
    """Humlicek W4 approximation of w(z) for Im z >= 0, with dw/dz of the approximant."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    if np.any(y < 0):
        raise DomainError("faddeeva approximation requires Im z >= 0")
    t = y - 1j * x
    w = np.empty_like(t)
    dw_dt = np.empty_like(t)
    idx = _region_index(x, y)
    for k, (num, den, dnum, dden) in enumerate(_REGIONS):
        m = idx == k
        if not np.any(m):
            continue
        tk = t[m]
        n, d = num(tk), den(tk)
        w[m] = n / d
        dw_dt[m] = (dnum(tk) * d - n * dden(tk)) / (d * d)
        if k == 3:
            e = np.exp(tk * tk)
            w[m] = e - w[m]
            dw_dt[m] = 2.0 * tk * e - dw_dt[m]
    # t = -i z
    return w, -1j * dw_dt


def faddeeva(z):
    return faddeeva_with_derivative(z)[0]


def voigt(x, p: LineshapeParams):
    """Area-scaled convolution of a Lorentzian and a Gaussian.

    Degenerate widths fall back to the exact pure profiles.
    """
    if p.lorentz_fwhm <= 0 and p.gauss_fwhm <= 0:
        raise DomainError("voigt needs at least one positive width")
    if p.gauss_fwhm <= 0:
        return lorentzian(x, p)
    if p.lorentz_fwhm <= 0:
        return gaussian(x, p)
    sigma = p.gauss_fwhm * _FWHM_TO_SIGMA
    z = (np.asarray(x, dtype=float) - p.center + 0.5j * p.lorentz_fwhm) / (sigma * _SQRT2)
    return p.area * faddeeva(z).real / (sigma * _SQRT2PI)


def voigt_fwhm(lorentz_fwhm, gauss_fwhm):
    """Olivero-Longbothum estimate of the Voigt FWHM (~0.02% accurate)."""
    fl, fg = float(lorentz_fwhm), float(gauss_fwhm)
    return 0.5346 * fl + math.sqrt(0.2166 * fl * fl + fg * fg)


def debye_waller(area_rf, area_psb):
    """Zero-phonon fraction ``area_rf / (area_rf + area_psb)``."""
    if area_rf < 0 or area_psb < 0:
        raise DomainError("areas must be non-negative")
    total = area_rf + area_psb
    if total <= 0:
        raise DomainError("at least one area must be positive")
    return area_rf / total


def synth_spectrum(zpl: LineshapeParams, psb: LineshapeParams, grid, noise_rms=0.0, seed=0):
    """Lorentzian ZPL plus Gaussian sideband sampled on ``grid`` with additive noise.

    ``noise_rms`` may be a scalar or a per-point array (e.g. shot-noise-like
    ``frac * sqrt(peak * model)``). Noisy values are clamped at zero.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainError("empty energy grid")
    noise_rms = np.asarray(noise_rms, dtype=float)
    if np.any(noise_rms < 0):
        raise DomainError("noise_rms must be >= 0")
    model = lorentzian(grid, zpl) + gaussian(grid, psb)
    if np.all(noise_rms == 0):
        return SpectrumTrace(grid, model)
    rng = np.random.default_rng(seed)
    noisy = model + noise_rms * rng.standard_normal(grid.size)
    return SpectrumTrace(grid, np.clip(noisy, 0.0, None))
