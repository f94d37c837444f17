from unittest import mock

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.special import wofz

from boundex import experiments as ex
from boundex import spectral
from boundex.correlation import CoincidenceHistogram
from boundex.dynamics import TimeTrace
from boundex.errors import DomainError
from boundex.figures import FIGURES, empirical_fwhm, fit_figure
from boundex.fitting import MODELS, ModelSpec, jacobian_check, lsq_fit, poisson_weights
from boundex.spectral import SpectrumTrace


def test_noiseless_exp_decay_is_exact():
    x = np.linspace(0, 5, 80)
    y = 3.2 * np.exp(-0.77 * x)
    fit = lsq_fit(ModelSpec("exp_decay", [1.0, 2.0], lower=[0, 0]), x, y)
    assert fit.converged
    assert np.allclose(fit.params, [3.2, 0.77], rtol=1e-8)


def test_cost_history_never_increases():
    rng = np.random.default_rng(1)
    x = np.linspace(0, 200, 100)
    y = 5 * np.exp(-np.sqrt(x / 21)) + rng.normal(0, 0.02, x.size)
    fit = lsq_fit(ModelSpec("stretched_exp", [1.0, 5.0, 0.9], lower=[0, 1e-3, 0.05], upper=[100, 1e4, 1]),
                  x, y)
    assert fit.converged
    assert np.all(np.diff(fit.cost_history) <= 0)
    assert fit["beta"] == pytest.approx(0.5, abs=0.05)


def test_fixed_parameter_linear_case_matches_closed_form():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 4, 50)
    basis = np.exp(-1.3 * x)
    y = 2.0 * basis + rng.normal(0, 0.05, x.size)
    w = rng.uniform(0.5, 2.0, x.size)
    fit = lsq_fit(ModelSpec("exp_decay", [1.0, 1.3], weights=w, fixed=[False, True]), x, y)
    a = np.sum(w * basis * y) / np.sum(w * basis**2)
    assert fit["amplitude"] == pytest.approx(a, rel=1e-10)
    assert fit["rate"] == 1.3
    assert fit.stderr[1] == 0.0
    resid = y - a * basis
    s2 = np.sum(w * resid**2) / (x.size - 1)
    assert fit.error("amplitude") == pytest.approx(np.sqrt(s2 / np.sum(w * basis**2)), rel=1e-6)


@given(st.floats(0.1, 100.0))
def test_amplitude_scaling(c):
    x = np.linspace(0, 60, 40)
    y = 3.0 * (1 - np.exp(-x / 9.3)) + 0.01 * np.sin(x)
    spec = ModelSpec("exp_rise", [1.0, 5.0], lower=[0, 1e-6])
    a = lsq_fit(spec, x, y)
    b = lsq_fit(ModelSpec("exp_rise", [c, 5.0], lower=[0, 1e-6]), x, c * y)
    assert b["amplitude"] == pytest.approx(c * a["amplitude"], rel=1e-6)
    assert b["tau"] == pytest.approx(a["tau"], rel=1e-6)


def test_voigt_linewidth_recovered():
    fit = fit_figure("2c", ex.resonant_scan(seed=4))
    assert fit.converged
    assert fit.headline["linewidth_ev"] == pytest.approx(0.12e-3, abs=0.01e-3)
    assert fit.headline["voigt_fwhm_ev"] > fit.headline["linewidth_ev"]


def _synthetic_g2(seed, truth=(1.0, 0.37, 0.1, 0.27, 4.05), norm=400.0):
    t_ns = np.arange(-500, 501) * 0.04
    lam = norm * MODELS["g2_combined"].func(t_ns, np.array(truth))
    counts = np.random.default_rng(seed).poisson(lam)
    return CoincidenceHistogram(40.0, t_ns * 1e3, counts, norm)


def test_g2_joint_confidence_region():
    truth = np.array([0.37, 0.27, 4.05])
    idx = [1, 3, 4]
    limit = stats.chi2.ppf(0.9545, 3)
    inside = 0
    for seed in range(20):
        fit = fit_figure("2d", _synthetic_g2(seed))
        assert fit.converged
        d = fit.params[idx] - truth
        cov = fit.covariance[np.ix_(idx, idx)]
        inside += float(d @ np.linalg.solve(cov, d)) <= limit
    # 20 draws at 95.45 % coverage: fewer than 16 inside has probability ~1.6 %
    assert inside >= 16


def test_bootstrap_spread_matches_covariance():
    rng = np.random.default_rng(9)
    x = np.linspace(0, 4, 60)
    sigma = 0.03
    y = 2 * np.exp(-1.3 * x) + rng.normal(0, sigma, x.size)
    spec = ModelSpec("exp_decay", [1.0, 1.0], lower=[0, 0])
    base = lsq_fit(spec, x, y)
    model = MODELS["exp_decay"].func(x, base.params)
    resid = y - model
    draws = [lsq_fit(spec, x, model + rng.choice(resid, x.size))["rate"] for _ in range(200)]
    ratio = np.std(draws) / base.error("rate")
    assert 0.5 < ratio < 2.0


def test_singular_jacobian_is_not_converged():
    x = np.zeros(10)
    fit = lsq_fit(ModelSpec("exp_decay", [1.0, 1.0]), x, np.ones(10))
    assert not fit.converged
    assert "singular" in fit.message


def test_iteration_cap_is_not_converged():
    x = np.linspace(0, 5, 50)
    fit = lsq_fit(ModelSpec("exp_decay", [0.1, 5.0], lower=[0, 0]), x, 3 * np.exp(-0.5 * x), max_iter=1)
    assert not fit.converged
    assert fit.iterations == 1


def test_spec_and_data_validation():
    with pytest.raises(DomainError):
        ModelSpec("nope", [1.0])
    with pytest.raises(DomainError):
        ModelSpec("exp_decay", [1.0])
    with pytest.raises(DomainError):
        ModelSpec("exp_decay", [1.0, -1.0], lower=[0, 0])
    spec = ModelSpec("exp_decay", [1.0, 1.0])
    with pytest.raises(DomainError):
        lsq_fit(spec, np.arange(3.0), np.arange(4.0))
    with pytest.raises(DomainError):
        lsq_fit(spec, np.arange(3.0), np.array([1.0, np.nan, 2.0]))
    with pytest.raises(DomainError):
        lsq_fit(spec, np.arange(1.0), np.arange(1.0))


def test_report_lists_parameters_and_correlations():
    x = np.linspace(0, 5, 30)
    fit = lsq_fit(ModelSpec("exp_decay", [1.0, 1.0]), x, 2 * np.exp(-x) + 0.01 * np.cos(7 * x))
    fit.headline = {"rate_per_us": fit["rate"]}
    text = fit.report()
    for needle in ("model: exp_decay", "amplitude", "rate", "correlation matrix", "headline rate_per_us"):
        assert needle in text
    c = fit.correlation
    assert np.allclose(np.diag(c), 1.0) and np.allclose(c, c.T)
    assert fit.as_dict().keys() == {"amplitude", "rate"}


# ---------------------------------------------------------------- analytic Jacobians

_RANGES = {
    "exp_decay": ([(0.1, 10), (0.05, 5)], np.linspace(0, 4, 40)),
    "exp_rise": ([(0.1, 10), (0.5, 200)], np.linspace(0, 60, 40)),
    "stretched_exp": ([(0.1, 10), (1, 100), (0.2, 1.0)], np.linspace(0.5, 200, 40)),
    "voigt": ([(0.1, 10), (-0.5, 0.5), (0.01, 1), (0.01, 1)], np.linspace(-2, 2, 61)),
    "lorentz_plus_gauss": ([(0.1, 5), (-0.5, 0.5), (0.05, 1), (0.01, 1), (-2, 0), (0.5, 3)],
                           np.linspace(-8, 7, 61)),
    "g2_combined": ([(0.5, 2), (0.0, 0.9), (0.02, 1), (0.01, 2), (0.5, 20)], np.linspace(-20, 20, 81)),
}


def _richardson_jacobian(model_id, p, x, levels=3):
    # central differences at h, h/2, h/4 combined by Richardson extrapolation
    f = MODELS[model_id].func
    cols = []
    for k in range(len(p)):
        h = 1e-2 * max(abs(p[k]), 1e-2)
        table = []
        for _ in range(levels):
            up, dn = np.array(p, float), np.array(p, float)
            up[k] += h
            dn[k] -= h
            table.append((f(x, up) - f(x, dn)) / (2 * h))
            h /= 2
        for order in range(1, levels):
            c = 4.0**order
            table = [(c * table[i + 1] - table[i]) / (c - 1) for i in range(len(table) - 1)]
        cols.append(table[0])
    return np.column_stack(cols)


def _exact_faddeeva(z):
    w = wofz(z)
    return w, -2 * z * w + 2j / np.sqrt(np.pi)


@pytest.mark.parametrize("model_id", sorted(_RANGES))
@given(data=st.data())
def test_analytic_jacobians(model_id, data):
    # the rational approximant of w(z) has tiny jumps between its regions; swapping in the
    # exact function isolates the chain rule from them
    bounds, x = _RANGES[model_id]
    p = [data.draw(st.floats(lo, hi)) for lo, hi in bounds]
    with mock.patch.object(spectral, "faddeeva_with_derivative", _exact_faddeeva):
        a = MODELS[model_id].jac(x, np.array(p))
        ref = _richardson_jacobian(model_id, p, x)
        fmax = np.abs(MODELS[model_id].func(x, np.array(p))).max()
    # entries far below the model's own rounding level cannot be resolved by any difference quotient
    scale = np.maximum(np.abs(p), 1e-2)
    denom = np.maximum(np.abs(ref), np.maximum(1e-3 * np.abs(ref).max(axis=0), 1e-6 * fmax / scale))
    assert np.max(np.abs(a - ref) / denom) < 1e-5


@pytest.mark.parametrize("model_id", sorted(_RANGES))
def test_jacobian_check_at_interior_points(model_id):
    bounds, x = _RANGES[model_id]
    p = [0.5 * (lo + hi) for lo, hi in bounds]
    assert jacobian_check(model_id, p, x) < 1e-5


def test_stretched_exp_jacobian_near_unit_beta():
    for beta in (0.98, 0.999, 1.0):
        assert jacobian_check("stretched_exp", [2.0, 21.0, beta], np.linspace(0.5, 200, 50)) < 1e-5


def _voigt_fd(p, x):
    # width steps relative to the total width, not to each (possibly tiny) component
    width = max(p[2], p[3])
    steps = [1e-6 * p[0], 1e-6 * width, 1e-6 * width, 1e-6 * width]
    f = MODELS["voigt"].func
    cols = []
    for k, h in enumerate(steps):
        up, dn = np.array(p, float), np.array(p, float)
        up[k] += h
        dn[k] -= h
        cols.append((f(x, up) - f(x, dn)) / (2 * h))
    return np.column_stack(cols)


def test_voigt_jacobian_over_width_ratios():
    x = np.linspace(-3, 3, 121)
    for gl in np.geomspace(1e-3, 1.0, 7):
        for gg in (1e-3, 3e-2, 1.0):
            p = [1.0, 0.1, gl, gg]
            xs = x * max(gl, gg) * 5
            a, fd = MODELS["voigt"].jac(xs, np.array(p)), _voigt_fd(p, xs)
            denom = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max(axis=0))
            assert np.max(np.abs(a - fd) / denom) < 1e-4, (gl, gg)


# ---------------------------------------------------------------- figure recipes

def test_fit_figure_dispatch_errors():
    tr = TimeTrace(np.linspace(0, 1e-6, 10), np.ones(10))
    with pytest.raises(DomainError):
        fit_figure("9z", tr)
    with pytest.raises(DomainError):
        fit_figure("2b", tr)
    assert set(FIGURES) == {"2b", "2c", "2d", "2e", "4a", "4c", "4d"}


def test_recipes_recover_synthetic_curves():
    t = np.linspace(0, 4e-6, 200)
    assert fit_figure("4a", TimeTrace(t, 3 * np.exp(-1.013e6 * t))).headline["rate_per_us"] == \
        pytest.approx(1.013, rel=1e-6)
    t = np.linspace(0, 60e-9, 200)
    assert fit_figure("4d", TimeTrace(t, 0.4 * (1 - np.exp(-t / 9.3e-9)))).headline["tau_ns"] == \
        pytest.approx(9.3, rel=1e-6)
    t = np.array(ex.TAU_E_DELAYS_US) * 1e-6
    fit = fit_figure("4c", TimeTrace(t, 0.8 * np.exp(-np.sqrt(t / 21e-6))))
    assert fit.headline["scale_us"] == pytest.approx(21.0, rel=1e-6)
    fit = fit_figure("2e", _synthetic_g2(0), signal_fraction=0.9)
    assert fit.headline["q0_corrected"] < fit.headline["q0"]


def test_debye_waller_recipe():
    fit = fit_figure("2b", ex.emission_spectrum(seed=1))
    assert fit.converged
    assert fit.headline["f_dw"] == pytest.approx(0.94, abs=0.01)


def test_empirical_fwhm_of_lorentzian():
    x = np.linspace(-5, 5, 20001)
    y = 1 / (1 + (2 * x / 0.7) ** 2)
    assert empirical_fwhm(x, y) == pytest.approx(0.7, rel=1e-4)
    assert empirical_fwhm(x[::50], y[::50]) == pytest.approx(0.7, rel=2e-2)
    assert isinstance(ex.resonant_scan(seed=0), SpectrumTrace)


def test_poisson_weights_floor():
    assert np.array_equal(poisson_weights([0, 1, 4]), [1.0, 1.0, 0.25])
