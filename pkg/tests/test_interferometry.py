import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boundex import interferometry as io
from boundex.errors import DomainError
from boundex.preset import paper_scatterer

angles = st.floats(-math.pi, math.pi)


def retarder(delta, theta):
    """Linear retarder with fast axis at theta, written out element by element."""
    c, s = math.cos(theta), math.sin(theta)
    e = cmath.exp(1j * delta)
    return np.array([[c * c + e * s * s, (1 - e) * c * s],
                     [(1 - e) * c * s, s * s + e * c * c]])


@given(angles)
def test_waveplates_match_retarder_formula(theta):
    assert np.allclose(io.jones_element("qwp", theta), retarder(math.pi / 2, theta), atol=1e-12)
    assert np.allclose(io.jones_element("hwp", theta), retarder(math.pi, theta), atol=1e-12)


@given(angles)
def test_waveplates_unitary_and_qwp_squared_is_hwp(theta):
    for kind in ("qwp", "hwp"):
        J = io.jones_element(kind, theta)
        assert np.allclose(J.conj().T @ J, np.eye(2), atol=1e-12)
    q = io.jones_element("qwp", theta)
    assert np.allclose(q @ q, io.jones_element("hwp", theta), atol=1e-12)


@given(angles)
def test_polarizer_is_projector(theta):
    P = io.jones_element("polarizer", theta)
    assert np.allclose(P @ P, P, atol=1e-12)
    assert np.trace(P).real == pytest.approx(1.0)


def test_unknown_element():
    with pytest.raises(DomainError):
        io.OpticalElement("lens")


def _lo_oracle(dtheta):
    # H in, HWP(0), QWP(dtheta), mirror, QWP(0), HWP(0), V out; referenced to V->V output
    out = retarder(math.pi, 0) @ retarder(math.pi / 2, 0)
    inp = retarder(math.pi / 2, dtheta) @ retarder(math.pi, 0)
    amp = (out @ inp @ np.array([1, 0]))[1]
    return amp / out[1, 1]


@given(st.floats(-0.7, 0.7))
def test_lo_matches_independent_chain(dtheta):
    assert io.lo_field(dtheta) == pytest.approx(_lo_oracle(dtheta), abs=1e-12)


def test_lo_null_and_symmetry():
    assert abs(io.lo_field(0.0)) < 1e-15
    d = math.radians(0.3)
    assert io.lo_field(-d) == pytest.approx(-io.lo_field(d))
    assert abs(io.lo_field(d)) ** 2 < abs(io.lo_field(2 * d)) ** 2
    with pytest.raises(DomainError):
        io.lo_field(math.pi / 4)


def test_finite_extinction_leak():
    assert io.lo_field(0.0, finite_extinction=1e6) == pytest.approx(1e-3)


def test_dipole_projection_baseline():
    assert abs(io.dipole_projection()) == pytest.approx(1 / math.sqrt(2))


def test_rf_field_values():
    p = io.ScattererParams(gamma=0.12e-3, mu=0.25)
    assert io.rf_field(0.0, p) == pytest.approx(2 * math.sqrt(0.25))
    far = io.rf_field(np.array([-100, 100]) * p.gamma, p)
    jump = (np.angle(far[1]) - np.angle(far[0])) % (2 * math.pi)
    assert jump == pytest.approx(math.pi - 2 * math.atan(1 / 200), abs=1e-12)
    assert abs(jump - math.pi) < 1e-2


@given(st.floats(0, 1e3), st.floats(-1e-2, 1e-2))
def test_saturation_factor_bounds(power, delta):
    p = io.ScattererParams(gamma=0.12e-3, mu=1e-5)
    s = io.saturation_factor(power, delta, p)
    assert 0 < s <= 1
    assert io.saturation_factor(0.0, delta, p) == 1.0


def test_scatterer_validation():
    with pytest.raises(DomainError):
        io.ScattererParams(gamma=0.0, mu=0.1)
    with pytest.raises(DomainError):
        io.ScattererParams(gamma=1.0, mu=1.5)
    with pytest.raises(DomainError):
        io.saturation_factor(-1.0, 0.0, io.ScattererParams(1.0, 0.1))


def _sign_changes(y):
    s = np.sign(y)
    s = s[s != 0]
    return int(np.count_nonzero(np.diff(s)))


@pytest.mark.parametrize("sgn", [1, -1])
def test_interference_single_sign_change(sgn):
    p = paper_scatterer()
    dg = np.linspace(-20, 20, 4001)
    tr = io.interferogram(dg * p.gamma, sgn * math.radians(0.3), 7.0, p)
    assert _sign_changes(tr.i_diff) == 1
    red = tr.i_diff[dg < 0]
    assert sgn * red[np.argmax(np.abs(red))] > 0


def test_zero_angle_numerator_is_rf_intensity():
    p = paper_scatterer()
    d = np.linspace(-20, 20, 801) * p.gamma
    tr = io.interferogram(d, 0.0, 0.0, p)
    ref = np.abs(io.dipole_projection() * io.rf_field(d, p)) ** 2
    assert np.max(np.abs(tr.i_diff - ref)) < 1e-12
    assert not tr.defined.any()


def test_visibility_drops_with_power():
    p = paper_scatterer()
    d = np.linspace(-20, 20, 2001) * p.gamma
    vis = [np.nanmax(np.abs(io.interferogram(d, math.radians(0.5), P, p).visibility)) for P in (7, 30)]
    assert vis[1] < vis[0]


def test_map_and_csv(tmp_path):
    p = paper_scatterer()
    d = np.linspace(-5, 5, 11) * p.gamma
    dts = np.radians([-0.3, 0.0, 0.3])
    m = io.interferogram_map(d, dts, 7.0, p)
    assert m.shape == (3, 11)
    assert np.allclose(m[1], io.interferogram(d, 0.0, 7.0, p).i_diff)
    io.write_map_csv(tmp_path / "m.csv", d, dts, m)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "dtheta_deg,detuning_ev,i_diff" and len(lines) == 34
    io.interferogram(d, dts[2], 7.0, p).to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().startswith("detuning_ev,i_tot,i_lo,visibility\n")


def test_chain_validation():
    with pytest.raises(DomainError):
        io.OpticalChain((io.OpticalElement("mirror"),), sample_index=0)
    els = (io.OpticalElement("polarizer"), io.OpticalElement("mirror"), io.OpticalElement("polarizer", 1.0))
    chain = io.OpticalChain(els, sample_index=1)
    with pytest.raises(DomainError):
        chain.input_qwp_index
