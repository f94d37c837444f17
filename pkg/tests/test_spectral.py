import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import constants, integrate, special

from boundex import spectral
from boundex.errors import DomainError
from boundex.spectral import LineshapeParams

F2S = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def test_lifetime_linewidth_matches_hbar_over_tau():
    hbar_ev = constants.hbar / constants.e
    assert spectral.lifetime_limited_linewidth(192e-12) == pytest.approx(hbar_ev / 192e-12, rel=1e-9)
    assert spectral.lifetime_limited_linewidth(192e-12) * 1e6 == pytest.approx(3.43, rel=5e-3)
    assert spectral.lifetime_limited_linewidth(1e-9) * 1e6 == pytest.approx(0.6582, rel=1e-3)


def test_broadening_ratio():
    assert 0.12e-3 / spectral.lifetime_limited_linewidth(192e-12) == pytest.approx(35.0, abs=0.5)


@pytest.mark.parametrize("tau", [0.0, -1e-12, float("nan")])
def test_lifetime_linewidth_rejects_nonpositive(tau):
    with pytest.raises(DomainError):
        spectral.lifetime_limited_linewidth(tau)


def test_faddeeva_against_scipy():
    x, y = np.meshgrid(np.linspace(-30, 30, 241), np.geomspace(1e-4, 40, 60))
    z = (x + 1j * y).ravel()
    w = spectral.faddeeva(z)
    ref = special.wofz(z)
    assert np.max(np.abs(w.real - ref.real) / np.abs(ref.real)) < 2e-4


def test_faddeeva_derivative_identity():
    z = np.array([0.3 + 0.2j, -2.0 + 1.0j, 5.0 + 0.01j, 0.0 + 3.0j, 12.0 + 7.0j])
    w, dw = spectral.faddeeva_with_derivative(z)
    exact = -2 * z * special.wofz(z) + 2j / math.sqrt(math.pi)
    assert np.allclose(dw, exact, rtol=2e-3, atol=1e-5)


def test_faddeeva_lower_half_plane_rejected():
    with pytest.raises(DomainError):
        spectral.faddeeva(np.array([1.0 - 0.5j]))


@pytest.mark.parametrize("lw,gw", [(0.12e-3, 0.05e-3), (1e-5, 1e-3), (1e-3, 1e-5), (2e-4, 2e-4)])
def test_voigt_against_scipy_profile(lw, gw):
    p = LineshapeParams(2.8233, lw, gw, 1.0)
    x = 2.8233 + np.linspace(-5, 5, 401) * (lw + gw)
    ref = special.voigt_profile(x - 2.8233, gw * F2S, lw / 2)
    got = spectral.voigt(x, p)
    assert np.max(np.abs(got - ref)) / ref.max() < 2e-4


def test_pure_limits_are_exact():
    x = np.linspace(-1e-3, 1e-3, 101)
    lor = LineshapeParams(0.0, lorentz_fwhm=1e-4, area=2.0)
    gau = LineshapeParams(0.0, gauss_fwhm=1e-4, area=2.0)
    assert np.array_equal(spectral.voigt(x, lor), spectral.lorentzian(x, lor))
    assert np.array_equal(spectral.voigt(x, gau), spectral.gaussian(x, gau))
    assert spectral.lorentzian(np.array([0.0]), lor)[0] == pytest.approx(2.0 * 2 / (math.pi * 1e-4))


def test_lineshape_areas():
    for fn, p in ((spectral.lorentzian, LineshapeParams(0.0, lorentz_fwhm=1.0, area=0.94)),
                  (spectral.gaussian, LineshapeParams(0.0, gauss_fwhm=1.0, area=0.06))):
        val, _ = integrate.quad(lambda e: fn(np.array([e]), p)[0], -np.inf, np.inf, limit=400)
        assert val == pytest.approx(p.area, rel=1e-6)


@given(st.floats(1e-3, 10.0), st.floats(1e-3, 10.0), st.floats(0.1, 5.0))
def test_voigt_positive_symmetric_normalized(lw, gw, area):
    p = LineshapeParams(0.0, lw, gw, area)
    x = np.linspace(0, 6 * (lw + gw), 200)
    v = spectral.voigt(x, p)
    assert np.all(v > 0)
    assert np.allclose(v, spectral.voigt(-x, p), rtol=1e-12)
    # dense quadrature plus the Lorentzian 1/x^2 tail beyond the grid
    L = 400 * (lw + gw)
    e = np.linspace(0, L, 400_001)
    half = integrate.trapezoid(spectral.voigt(e, p), e) + area * lw / (2 * math.pi * L)
    assert 2 * half == pytest.approx(area, rel=2e-3)


def test_voigt_fwhm_against_numeric():
    for lw, gw in ((0.12, 0.05), (1.0, 1.0), (0.01, 1.0), (1.0, 0.01)):
        x = np.linspace(0, 5 * (lw + gw), 200001)
        y = special.voigt_profile(x, gw * F2S, lw / 2)
        numeric = 2 * x[np.argmin(np.abs(y - y[0] / 2))]
        assert spectral.voigt_fwhm(lw, gw) == pytest.approx(numeric, rel=3e-4)


def test_debye_waller():
    assert spectral.debye_waller(0.94, 0.06) == pytest.approx(0.94)
    with pytest.raises(DomainError):
        spectral.debye_waller(0.0, 0.0)


def test_invalid_lineshape_params():
    with pytest.raises(DomainError):
        LineshapeParams(0.0, lorentz_fwhm=-1.0)
    with pytest.raises(DomainError):
        LineshapeParams(float("inf"))


def test_synth_spectrum_deterministic_and_clamped():
    zpl = LineshapeParams(2.8233, lorentz_fwhm=0.12e-3, area=0.94)
    psb = LineshapeParams(2.8223, gauss_fwhm=1.5e-3, area=0.06)
    grid = np.linspace(2.815, 2.830, 751)
    a = spectral.synth_spectrum(zpl, psb, grid, 50.0, seed=3)
    b = spectral.synth_spectrum(zpl, psb, grid, 50.0, seed=3)
    c = spectral.synth_spectrum(zpl, psb, grid, 50.0, seed=4)
    assert np.array_equal(a.intensities, b.intensities)
    assert not np.array_equal(a.intensities, c.intensities)
    assert np.all(a.intensities >= 0)
    clean = spectral.synth_spectrum(zpl, psb, grid)
    assert np.allclose(clean.intensities, spectral.lorentzian(grid, zpl) + spectral.gaussian(grid, psb))
    with pytest.raises(DomainError):
        spectral.synth_spectrum(zpl, psb, [])


def test_spectrum_csv_round_trip(tmp_path):
    tr = spectral.SpectrumTrace(np.linspace(2.8, 2.9, 11), np.random.default_rng(0).random(11))
    tr.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "energy_ev,intensity"
    back = spectral.SpectrumTrace.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.energies, tr.energies)
    assert np.array_equal(back.intensities, tr.intensities)
