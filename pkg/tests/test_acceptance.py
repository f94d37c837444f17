"""End-to-end acceptance: A1-A9 at their required tolerances, one summary line each.

Targets and tolerances are restated here rather than read back from
``boundex.acceptance`` so that loosening a criterion in the package is caught.
"""

import re
from pathlib import Path

import pytest

from boundex.acceptance import CRITERIA, DEFAULT_SEED, run_acceptance
from boundex.correlation import background_correct
from boundex.preset import PAPER
from boundex.spectral import lifetime_limited_linewidth

from conftest import ACCEPTANCE_LINES

# check name -> (expected, tolerance, relative)
TARGETS = {
    "A1": {"raw q0": (0.37, 0.08, False), "bunch ratio b": (0.27, 0.05, False),
           "tau1 (ns)": (4.05, 0.15, True)},
    "A2": {"background-corrected q0": (0.128, 0.005, False)},
    "A3": {"lifetime-limited linewidth (ueV)": (3.43, 0.005, True), "broadening ratio": (35.0, 0.5, False)},
    "A4": {"F_DW": (0.94, 0.01, False)},
    "A5": {"sign changes at +0.3 deg": (1, 0, False), "sign changes at -0.3 deg": (1, 0, False),
           "max |numerator - |c_pol E_RF|^2| at dtheta = 0": (0.0, 1e-12, False),
           "RF phase jump across resonance (rad)": (3.141592653589793, 1e-2, False)},
    "A6": {},
    "A7": {"probe decay rate (1/us)": (1.013, 0.05, True), "rate ratio at doubled power": (2.0, 0.05, True)},
    "A8": {"stretched-exp scale (us)": (21.0, 0.15, True), "recovery tau at high power (ns)": (9.3, 0.05, True),
           "recovery tau at low power (ns)": (200.0, 0.10, True)},
    "A9": {"max |MC - ODE| / binomial s.e.": (0.0, 3.0, False),
           "max jacobian_check deviation": (0.0, 1e-5, False),
           "Poisson g2 max |g2 - 1|": (0.0, 0.01, False)},
}

# flags that each criterion must report (boolean structure checks)
FLAGS = {
    "A1": ["fit converged"],
    "A4": ["fit converged"],
    "A5": ["red lobe positive at +0.3 deg", "red lobe negative at -0.3 deg"],
    "A6": ["peak |Vis| high power < low power"],
    "A9": ["same-seed streams byte-identical"],
}


@pytest.fixture(scope="module")
def results():
    return {r.key: r for r in run_acceptance(seed=DEFAULT_SEED)}


def _within(measured, expected, tol, relative):
    lim = tol * abs(expected) if relative else tol
    return abs(measured - expected) <= lim


@pytest.mark.parametrize("key", list(CRITERIA))
def test_criterion(results, key):
    r = results[key]
    parts = [f"{c.name}={c.measured:.6g}" if c.name in TARGETS[key] else f"{c.name}: {'ok' if c.passed else 'no'}"
             for c in r.checks]
    line = f"{key} {'PASS' if r.passed else 'FAIL'} {CRITERIA[key][0]}: " + ", ".join(parts)
    if r.error:
        line += f" error={r.error}"
    print(line)
    ACCEPTANCE_LINES.append(line)

    assert not r.error, r.error
    by_name = {c.name: c for c in r.checks}
    for name, (expected, tol, rel) in TARGETS[key].items():
        c = by_name[name]
        assert (c.expected, c.tolerance, c.relative) == (expected, tol, rel), f"{name} target drifted"
        assert _within(c.measured, expected, tol, rel), c.describe()
    for flag in FLAGS.get(key, []):
        hits = [c for c in r.checks if c.name.startswith(flag)]
        assert hits and all(c.passed for c in hits), flag
    assert r.passed


def test_corrupted_lifetime_fails_linewidth_criterion():
    bad = PAPER.with_overrides(tau_rad=500e-12)
    (r,) = run_acceptance(bad, only=["A3"])
    assert not r.passed


def test_corrupted_bunching_fails_g2_criterion():
    bad = PAPER.with_overrides(bunch_ratio=0.6)
    (r,) = run_acceptance(bad, only=["A1"])
    assert not r.passed


def test_independent_algebra():
    # closed forms worked by hand: hbar / tau and (g - (1 - R^2)) / R^2
    hbar_ev_s = 6.582119569e-16
    assert lifetime_limited_linewidth(192e-12) == pytest.approx(hbar_ev_s / 192e-12, rel=1e-9)
    assert background_correct(0.37, 0.85) == pytest.approx((0.37 - (1 - 0.85**2)) / 0.85**2, rel=1e-12)


_DOC = Path(__file__).resolve().parents[1] / "paper.md"

# preset field -> literal pattern in the source document
_REPORTED = {
    "tau_rad": r"192 \\text\{ ps\}",
    "voigt_linewidth": r"0\.12 \\text\{ meV\}",
    "broadening_ratio": r"35 times",
    "debye_waller": r"0\.94",
    "zpl_energy": r"2\.8233 eV",
    "q0_raw": r"q_0 = 0\.37",
    "q0_raw_err": r"0\.37 \\pm 0\.11",
    "q0_corrected": r"q_0 of 0\.13",
    "signal_fraction": r"R = 0\.85",
    "bunch_ratio": r"ratio as 0\.27",
    "bunch_time": r"4\.05 ns",
    "g2_power": r"100 nW",
    "stabilize_power": r"32 nW",
    "low_power": r"7 nW",
    "high_power": r"30 nW",
    "charge_power": r"40 nW",
    "auger_rate": r"1\.013 \\mu",
    "probe_delay": r"1\.2 \\mu",
    "recovery_high_power": r"90 nW",
    "recovery_low_power": r"20 nW",
    "recovery_high_tau": r"9\.3 ns",
    "recovery_low_tau": r"200 ns",
    "ab_saturation": r"2\.9 μ W",
}


@pytest.mark.skipif(not _DOC.exists(), reason="source document not shipped")
@pytest.mark.parametrize("field", sorted(_REPORTED))
def test_preset_value_appears_in_source(field):
    assert re.search(_REPORTED[field], _DOC.read_text(encoding="utf-8")), field
    assert float(getattr(PAPER, field)) > 0
