"""Levenberg-Marquardt least squares and the registry of fitted model families.

The engine minimizes ``sum(w * (y - f(x, p))**2)`` with Marquardt's
diagonal damping (``lambda`` starts at 1e-3, x0.3 on an accepted step, x2 on
a rejected one). Bounds are enforced by projecting each trial point onto the
box. Parameters can be held fixed with a boolean mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import DomainError

__all__ = [
    "Model",
    "MODELS",
    "ModelSpec",
    "FitResult",
    "lsq_fit",
    "jacobian_check",
    "finite_difference_jacobian",
    "poisson_weights",
]

_F2S = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Model:
    name: str
    params: tuple
    func: object
    jac: object
    amplitude_params: tuple = ()

    @property
    def arity(self):
        return len(self.params)


# --- model families -------------------------------------------------------

def _exp_decay(x, p):
    return p[0] * np.exp(-p[1] * x)


def _exp_decay_jac(x, p):
    e = np.exp(-p[1] * x)
    return np.column_stack([e, -p[0] * x * e])


def _exp_rise(x, p):
    return p[0] * (1.0 - np.exp(-x / p[1]))


def _exp_rise_jac(x, p):
    e = np.exp(-x / p[1])
    return np.column_stack([1.0 - e, -p[0] * e * x / p[1] ** 2])


def _stretched(x, p):
    return p[0] * np.exp(-(np.abs(x) / p[1]) ** p[2])


def _stretched_jac(x, p):
    a, s, b = p
    r = np.abs(x) / s
    rb = r ** b
    e = np.exp(-rb)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where(r > 0, np.log(r), 0.0)
    return np.column_stack([e, a * e * b * rb / s, -a * e * rb * logr])


def _lorentz_parts(x, area, c, fwhm):
    hw = 0.5 * fwhm
    d = x - c
    den = d * d + hw * hw
    f = area * hw / (math.pi * den)
    da = f / area if area != 0 else hw / (math.pi * den)
    dc = f * 2.0 * d / den
    dfw = 0.5 * area / math.pi * (den - 2.0 * hw * hw) / (den * den)
    return f, da, dc, dfw


def _gauss_parts(x, area, c, fwhm):
    s = fwhm * _F2S
    d = x - c
    g = np.exp(-0.5 * (d / s) ** 2) / (s * _SQRT2PI)
    f = area * g
    return f, g, f * d / s**2, f * (d * d / s**3 - 1.0 / s) * _F2S


def _lpg(x, p):
    return (_lorentz_parts(x, p[0], p[1], p[2])[0]
            + _gauss_parts(x, p[3], p[4], p[5])[0])


def _lpg_jac(x, p):
    _, a1, c1, w1 = _lorentz_parts(x, p[0], p[1], p[2])
    _, a2, c2, w2 = _gauss_parts(x, p[3], p[4], p[5])
    return np.column_stack([a1, c1, w1, a2, c2, w2])


def _voigt_parts(x, p):
    area, c, fl, fg = p
    s = fg * _F2S
    z = (x - c + 0.5j * fl) / (s * _SQRT2)
    w, dw = spectral.faddeeva_with_derivative(z)
    norm = 1.0 / (s * _SQRT2PI)
    shape = w.real * norm
    d_c = (dw * (-1.0 / (s * _SQRT2))).real * norm
    d_fl = (dw * (0.5j / (s * _SQRT2))).real * norm
    d_s = (dw * (-z / s)).real * norm - shape / s
    return shape, np.column_stack([shape, area * d_c, area * d_fl, area * d_s * _F2S])


def _voigt(x, p):
    return p[0] * _voigt_parts(x, p)[0]


def _voigt_jac(x, p):
    return _voigt_parts(x, p)[1]


def _g2(x, p):
    a, q0, t0, b, t1 = p
    ax = np.abs(x)
    return a * (1.0 - (1.0 - q0) * np.exp(-ax / t0)) * (1.0 + b * np.exp(-ax / t1))


def _g2_jac(x, p):
    a, q0, t0, b, t1 = p
    ax = np.abs(x)
    e0, e1 = np.exp(-ax / t0), np.exp(-ax / t1)
    s = 1.0 - (1.0 - q0) * e0
    lg = 1.0 + b * e1
    return np.column_stack([
        s * lg,
        a * lg * e0,
        -a * lg * (1.0 - q0) * e0 * ax / t0**2,
        a * s * e1,
        a * s * b * e1 * ax / t1**2,
    ])


MODELS = {
    m.name: m for m in (
        Model("exp_decay", ("amplitude", "rate"), _exp_decay, _exp_decay_jac, (0,)),
        Model("exp_rise", ("amplitude", "tau"), _exp_rise, _exp_rise_jac, (0,)),
        Model("stretched_exp", ("amplitude", "scale", "beta"), _stretched, _stretched_jac, (0,)),
        Model("voigt", ("area", "center", "lorentz_fwhm", "gauss_fwhm"), _voigt, _voigt_jac, (0,)),
        Model("lorentz_plus_gauss",
              ("area_l", "center_l", "fwhm_l", "area_g", "center_g", "fwhm_g"),
              _lpg, _lpg_jac, (0, 3)),
        Model("g2_combined", ("amplitude", "q0", "tau0", "bunch_ratio", "tau1"),
              _g2, _g2_jac, (0,)),
    )
}


# --- engine ---------------------------------------------------------------

def poisson_weights(counts):
    return 1.0 / np.maximum(np.asarray(counts, dtype=float), 1.0)


@dataclass
class ModelSpec:
    model_id: str
    p0: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    weights: np.ndarray = None
    fixed: np.ndarray = None

    def __post_init__(self):
        if self.model_id not in MODELS:
            raise DomainError(f"unknown model {self.model_id!r}")
        n = MODELS[self.model_id].arity
        self.p0 = np.asarray(self.p0, dtype=float)
        if self.p0.shape != (n,):
            raise DomainError(f"{self.model_id} takes {n} parameters, got {self.p0.size}")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        self.fixed = np.zeros(n, bool) if self.fixed is None else np.asarray(self.fixed, bool)
        if np.any(self.lower > self.p0) or np.any(self.upper < self.p0):
            raise DomainError("bounds must bracket the initial parameters")

    @property
    def model(self) -> Model:
        return MODELS[self.model_id]


@dataclass
class FitResult:
    model_id: str
    names: tuple
    params: np.ndarray
    covariance: np.ndarray
    rss: float
    converged: bool
    iterations: int
    n_points: int
    n_free: int
    message: str = ""
    cost_history: list = field(default_factory=list, repr=False)
    headline: dict = field(default_factory=dict)

    @property
    def stderr(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def correlation(self):
        se = self.stderr
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self.covariance / np.outer(se, se)
        c[~np.isfinite(c)] = 0.0
        return c

    def __getitem__(self, name):
        return float(self.params[self.names.index(name)])

    def error(self, name):
        return float(self.stderr[self.names.index(name)])

    def as_dict(self):
        return {n: float(v) for n, v in zip(self.names, self.params)}

    def report(self):
        lines = [f"model: {self.model_id}",
                 f"converged: {self.converged} ({self.message}, {self.iterations} iterations)",
                 f"rss: {self.rss:.10g}  points: {self.n_points}  free: {self.n_free}",
                 "parameters (covariance-based standard errors):"]
        for n, v, e in zip(self.names, self.params, self.stderr):
            lines.append(f"  {n:>14s} = {v: .10g} +/- {e:.4g}")
        lines.append("correlation matrix:")
        lines.append("  " + " ".join(f"{n:>10.10s}" for n in self.names))
        for row in self.correlation:
            lines.append("  " + " ".join(f"{v:10.4f}" for v in row))
        for k, v in self.headline.items():
            lines.append(f"headline {k} = {v:.10g}")
        return "\n".join(lines) + "\n"


def lsq_fit(spec: ModelSpec, xs, ys, max_iter=500, xtol=1e-10, ftol=1e-12) -> FitResult:
    """Weighted Levenberg-Marquardt fit of ``spec`` to ``(xs, ys)``.

    Converges when the relative parameter step drops below ``xtol`` or the
    relative cost decrease below ``ftol``. The covariance is ``(J^T W J)^-1``
    at the optimum scaled by the reduced chi-square; a singular normal matrix
    marks the fit as not converged.
    """
    model = spec.model
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("xs and ys must be 1-D arrays of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("data must be finite")
    free = ~spec.fixed
    n_free = int(free.sum())
    if x.size < n_free:
        raise DomainError("fewer data points than free parameters")
    w = np.ones_like(y) if spec.weights is None else np.asarray(spec.weights, dtype=float)
    sw = np.sqrt(w)
    lo, hi = spec.lower, spec.upper

    p = np.clip(spec.p0.copy(), lo, hi)
    r = sw * (y - model.func(x, p))
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    converged, message, it = False, "max iterations", 0
    for it in range(1, max_iter + 1):
        J = sw[:, None] * model.jac(x, p)[:, free]
        A = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(A), 1e-300)
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 2.0
                continue
            trial = p.copy()
            trial[free] += step
            trial = np.clip(trial, lo, hi)
            r_new = sw * (y - model.func(x, trial))
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 2.0
        if not accepted:
            converged, message = True, "no further decrease"
            break
        dp = np.abs(trial - p)[free]
        scale = np.maximum(np.abs(p[free]), 1e-300)
        rel_step = float(np.max(dp / scale)) if n_free else 0.0
        rel_cost = (cost - cost_new) / cost if cost > 0 else 0.0
        p, r, cost = trial, r_new, cost_new
        history.append(cost)
        lam = max(lam * 0.3, 1e-15)
        if cost == 0.0 or rel_step < xtol or rel_cost < ftol:
            converged, message = True, "converged"
            break

    cov = np.zeros((p.size, p.size))
    J = sw[:, None] * model.jac(x, p)[:, free]
    A = J.T @ J
    dof = x.size - n_free
    try:
        # judge conditioning on the column-scaled matrix so units do not matter
        d = np.sqrt(np.diag(A))
        if n_free and (np.any(d == 0) or np.linalg.cond(A / np.outer(d, d)) > 1e15):
            raise np.linalg.LinAlgError("ill-conditioned")
        inv = np.linalg.inv(A / np.outer(d, d)) / np.outer(d, d) if n_free else np.zeros((0, 0))
        s2 = cost / dof if dof > 0 else 0.0
        cov[np.ix_(free, free)] = inv * s2
    except np.linalg.LinAlgError:
        converged, message = False, "singular Jacobian at optimum"
    return FitResult(spec.model_id, model.params, p, cov, cost, converged, it,
                     x.size, n_free, message, history)


def finite_difference_jacobian(model_id, params, xs, rel_step=1e-6):
    model = MODELS[model_id]
    p = np.asarray(params, dtype=float)
    x = np.asarray(xs, dtype=float)
    # a parameter sitting at zero still needs a usable step
    floor = max(1e-3 * float(np.max(np.abs(p))), 1e-12)
    cols = []
    for k in range(p.size):
        h = rel_step * max(abs(p[k]), floor)
        up, dn = p.copy(), p.copy()
        up[k] += h
        dn[k] -= h
        cols.append((model.func(x, up) - model.func(x, dn)) / (2.0 * h))
    return np.column_stack(cols)


def jacobian_check(model_id, params, xs, rel_step=1e-6, floor=1e-3):
    """Largest relative disagreement between analytic and central-difference Jacobians.

    Each element is compared relative to ``max(|J_fd|, floor * max|J_fd column|)``
    so entries that pass through zero do not dominate.
    """
    analytic = MODELS[model_id].jac(np.asarray(xs, float), np.asarray(params, float))
    fd = finite_difference_jacobian(model_id, params, xs, rel_step)
    colmax = np.max(np.abs(fd), axis=0)
    denom = np.maximum(np.abs(fd), floor * colmax)
    denom[denom == 0] = 1.0
    return float(np.max(np.abs(analytic - fd) / denom))
