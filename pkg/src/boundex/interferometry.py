"""Coherent scattering and Jones-calculus model of cross-polarized detection.

The laser leaking through the cross-polarizer (the local oscillator, LO) and
the coherently scattered resonance fluorescence (RF) both pass through the
output optics. Amplitudes returned here are referenced to the output chain's
V->V transmission, so the RF term keeps its bare phase and only the input-side
waveplate rotation shows up in the LO phase.

Angles are radians unless a name says ``_deg``; detunings and ``gamma`` are
energies in eV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError

__all__ = [
    "ScattererParams",
    "OpticalElement",
    "OpticalChain",
    "InterferogramTrace",
    "rotation",
    "jones_element",
    "baseline_chain",
    "rf_field",
    "lo_field",
    "saturation_factor",
    "dipole_projection",
    "interferogram",
    "interferogram_map",
    "write_map_csv",
]

KINDS = ("polarizer", "hwp", "qwp", "mirror")


@dataclass(frozen=True)
class ScattererParams:
    gamma: float  # linewidth, eV
    mu: float  # fluorescence efficiency
    e0: float = 1.0
    psat: float = 30.0  # nW

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be > 0")
        if not 0 <= self.mu <= 1:
            raise DomainError("mu must lie in [0, 1]")
        if self.e0 < 0:
            raise DomainError("e0 must be >= 0")
        if not self.psat > 0:
            raise DomainError("psat must be > 0")


@dataclass(frozen=True)
class OpticalElement:
    kind: str
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown optical element {self.kind!r}")

    def matrix(self):
        return jones_element(self.kind, self.angle)


@dataclass(frozen=True)
class OpticalChain:
    """Ordered elements; ``elements[sample_index]`` is the sample reflection."""

    elements: tuple = field(default_factory=tuple)
    sample_index: int = 3
    dipole_angle: float = math.pi / 4

    def __post_init__(self):
        els = tuple(self.elements)
        object.__setattr__(self, "elements", els)
        if not els:
            raise DomainError("optical chain is empty")
        if els[0].kind != "polarizer" or els[-1].kind != "polarizer":
            raise DomainError("chain must start and end with a polarizer")
        if not 0 < self.sample_index < len(els) - 1:
            raise DomainError("sample_index must point inside the chain")

    @property
    def input_qwp_index(self):
        for i in range(self.sample_index - 1, -1, -1):
            if self.elements[i].kind == "qwp":
                return i
        raise DomainError("chain has no input quarter-wave plate")

    def rotated_input_qwp(self, dtheta):
        i = self.input_qwp_index
        els = list(self.elements)
        els[i] = replace(els[i], angle=els[i].angle + dtheta)
        return replace(self, elements=tuple(els))

    def product(self, start=0, stop=None):
        m = np.eye(2, dtype=complex)
        for el in self.elements[start:stop]:
            m = el.matrix() @ m
        return m

    @property
    def detection_axis(self):
        a = self.elements[-1].angle
        return np.array([math.cos(a), math.sin(a)])

    @property
    def input_axis(self):
        a = self.elements[0].angle
        return np.array([math.cos(a), math.sin(a)])

    def output_reference(self):
        """Output-chain amplitude transmission for light polarized along the detector axis."""
        e = self.detection_axis
        return complex(e @ self.product(self.sample_index + 1) @ e)


@dataclass
class InterferogramTrace:
    detunings: np.ndarray
    i_tot: np.ndarray
    i_lo: np.ndarray
    visibility: np.ndarray
    dtheta: float = 0.0
    power: float = 0.0

    @property
    def i_diff(self):
        return self.i_tot - self.i_lo

    @property
    def defined(self):
        """Mask of points where the visibility exists (I_LO > 0)."""
        return np.isfinite(self.visibility)

    def to_csv(self, path):
        i_lo = np.broadcast_to(self.i_lo, self.detunings.shape)
        with open(path, "w") as fh:
            fh.write("detuning_ev,i_tot,i_lo,visibility\n")
            for row in zip(self.detunings, self.i_tot, i_lo, self.visibility):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


def jones_element(kind, angle=0.0):
    """Jones matrix of an element with its axis at ``angle`` from horizontal."""
    if kind == "polarizer":
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)
    if kind == "hwp":
        return rotation(-angle) @ np.diag([1.0, -1.0]).astype(complex) @ rotation(angle)
    if kind == "qwp":
        return rotation(-angle) @ np.diag([1.0, 1j]) @ rotation(angle)
    if kind == "mirror":
        return np.eye(2, dtype=complex)
    raise DomainError(f"unknown optical element {kind!r}")


def baseline_chain():
    """H polarizer, HWP, QWP, sample, QWP, HWP, V polarizer; all waveplate axes at 0."""
    els = (OpticalElement("polarizer", 0.0), OpticalElement("hwp"), OpticalElement("qwp"),
           OpticalElement("mirror"),
           OpticalElement("qwp"), OpticalElement("hwp"), OpticalElement("polarizer", math.pi / 2))
    return OpticalChain(els, sample_index=3)


def rf_field(delta, p: ScattererParams):
    """Coherently scattered field ``gamma / (-i delta + gamma/2) * sqrt(mu) * E0``."""
    delta = np.asarray(delta, dtype=float)
    return p.gamma / (-1j * delta + 0.5 * p.gamma) * math.sqrt(p.mu) * p.e0


def lo_field(dtheta, chain: OpticalChain = None, e0=1.0, finite_extinction=None):
    """Detected laser amplitude with the input QWP offset by ``dtheta`` from its optimum.

    ``finite_extinction`` (a power ratio such as 1e6) adds an in-phase leak of
    amplitude ``e0 / sqrt(extinction)``; ``None`` gives the ideal null.
    """
    if abs(dtheta) >= math.pi / 4:
        raise DomainError("|dtheta| must be < pi/4")
    chain = baseline_chain() if chain is None else chain
    rotated = chain.rotated_input_qwp(dtheta)
    amp = complex(chain.detection_axis @ rotated.product() @ chain.input_axis) * e0
    ref = chain.output_reference()
    if ref != 0:
        amp /= ref
    if finite_extinction is not None:
        amp += e0 / math.sqrt(finite_extinction)
    return amp


def dipole_projection(chain: OpticalChain = None):
    """Detected fraction of the RF amplitude, ``c_pol`` (1/sqrt(2) for the baseline)."""
    chain = baseline_chain() if chain is None else chain
    d = np.array([math.cos(chain.dipole_angle), math.sin(chain.dipole_angle)])
    amp = complex(chain.detection_axis @ chain.product(chain.sample_index + 1) @ d)
    ref = chain.output_reference()
    return amp / ref if ref != 0 else amp


def saturation_factor(power, delta, p: ScattererParams):
    """Coherent-amplitude reduction ``1 / (1 + s)`` with detuning-dependent saturation s."""
    if power < 0:
        raise DomainError("power must be >= 0")
    s = (power / p.psat) / (1.0 + (2.0 * np.asarray(delta, dtype=float) / p.gamma) ** 2)
    return 1.0 / (1.0 + s)


def interferogram(detunings, dtheta, power, p: ScattererParams, chain: OpticalChain = None,
                  finite_extinction=None) -> InterferogramTrace:
    chain = baseline_chain() if chain is None else chain
    detunings = np.asarray(detunings, dtype=float)
    lo = lo_field(dtheta, chain, p.e0, finite_extinction)
    rf = dipole_projection(chain) * saturation_factor(power, detunings, p) * rf_field(detunings, p)
    i_tot = np.abs(lo + rf) ** 2
    i_lo = np.full(detunings.shape, abs(lo) ** 2)
    # an aligned chain nulls the LO only up to rounding in the matrix products
    floor = (64 * np.finfo(float).eps * max(p.e0, 1.0)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        vis = np.where(i_lo > floor, (i_tot - i_lo) / i_lo, np.nan)
    return InterferogramTrace(detunings, i_tot, i_lo, vis, dtheta, power)


def interferogram_map(detunings, dthetas, power, p: ScattererParams, chain=None,
                      finite_extinction=None):
    """``I_tot - I_LO`` on a (dtheta, detuning) grid; rows follow ``dthetas``."""
    return np.vstack([interferogram(detunings, dt, power, p, chain, finite_extinction).i_diff
                      for dt in dthetas])


def write_map_csv(path, detunings, dthetas, i_diff):
    with open(path, "w") as fh:
        fh.write("dtheta_deg,detuning_ev,i_diff\n")
        for dt, row in zip(dthetas, i_diff):
            for d, v in zip(detunings, row):
                fh.write(f"{math.degrees(dt):.17g},{d:.17g},{v:.17g}\n")
