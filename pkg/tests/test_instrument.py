import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rooftemp.errors import DegenerateFitError, ParseError
from rooftemp.instrument import (
    CalibrationSession,
    InstrumentCalibration,
    ThermometerReading,
    calibrations_to_csv,
    denormalize_reading,
    field_kinetic_temps,
    fit_all,
    fit_instrument,
    kinetic_to_radiant,
    normalize_reading,
    parse_calibrations_csv,
    parse_readings_csv,
    radiant_to_kinetic,
    readings_to_csv,
    session_from_readings,
)

ORACLE_KINETIC = 274.195407113416  # displayed 276.15 K, device 0.95, water 0.9838; mpmath


def session_for(slope, offset, table, controls=None, sigma=0.0, seed=0, iid="IR"):
    """Readings an instrument with distortion (slope, offset) shows on a water bath."""
    controls = np.arange(276.15, 296.2, 0.5) if controls is None else controls
    kinetic = (controls - offset) / slope
    shown = kinetic_to_radiant(kinetic, 0.95, 0.9838, table)
    if sigma:
        shown = shown + sigma * np.random.default_rng(seed).standard_normal(shown.shape)
    s = CalibrationSession()
    for c, d in zip(controls, shown):
        s.add(iid, float(c), float(d))
    return s


def test_radiant_to_kinetic_oracle(device_table):
    assert radiant_to_kinetic(276.15, 0.95, 0.9838, device_table) == pytest.approx(ORACLE_KINETIC, abs=2e-4)


def test_equal_emissivities_are_identity(device_table):
    assert radiant_to_kinetic(280.0, 0.95, 0.95, device_table) == pytest.approx(280.0, abs=1e-3)


def test_kinetic_to_radiant_inverts(device_table):
    t = np.array([260.0, 275.3, 301.7])
    back = radiant_to_kinetic(kinetic_to_radiant(t, 0.95, 0.63, device_table), 0.95, 0.63, device_table)
    assert np.allclose(back, t, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(255.0, 320.0), st.floats(0.85, 0.99), st.floats(0.01, 1.0))
def test_sign_property(device_table, displayed, e_device, frac):
    e_target = e_device + frac * (1.0 - e_device)
    assert radiant_to_kinetic(displayed, e_device, e_target, device_table) < displayed
    assert radiant_to_kinetic(displayed, e_target, e_device, device_table) > displayed


@pytest.mark.parametrize("slope,offset", [(1.02, -0.3), (0.98, 0.4), (1.0, 0.0)])
def test_fit_recovers_distortion(device_table, slope, offset):
    cal = fit_instrument(session_for(slope, offset, device_table), "IR", device_table)
    assert cal.slope == pytest.approx(slope, abs=1e-6)
    assert cal.offset == pytest.approx(offset, abs=1e-6 * 300)
    assert cal.r_squared == pytest.approx(1.0, abs=1e-12)


def test_noisy_fit_slope_within_one_percent(device_table):
    for seed in range(10):
        cal = fit_instrument(session_for(1.02, -0.3, device_table, sigma=0.1, seed=seed), "IR", device_table)
        assert abs(cal.slope - 1.02) <= 0.01


def test_degenerate_sessions(device_table):
    with pytest.raises(DegenerateFitError, match="at least 2"):
        fit_instrument(session_for(1, 0, device_table, controls=np.array([280.0])), "IR", device_table)
    with pytest.raises(DegenerateFitError, match="span"):
        fit_instrument(session_for(1, 0, device_table, controls=np.linspace(280, 283, 7)), "IR", device_table)
    s = CalibrationSession()
    for c in np.linspace(275, 295, 5):
        s.add("IR", float(c), 280.0)
    with pytest.raises(DegenerateFitError):
        fit_instrument(s, "IR", device_table)


def test_negative_slope_rejected(device_table):
    s = CalibrationSession()
    for c, d in zip(np.linspace(275, 295, 5), np.linspace(295, 275, 5)):
        s.add("IR", float(c), float(d))
    with pytest.raises(DegenerateFitError, match="slope"):
        fit_instrument(s, "IR", device_table)


def test_fit_all_collects_errors(device_table):
    s = session_for(1.0, 0.0, device_table, iid="good")
    s.add("bad", 280.0, 280.0)
    cals, errors = fit_all(s, device_table)
    assert [c.instrument_id for c in cals] == ["good"]
    assert "bad" in errors


def test_low_r_squared_warns(device_table, caplog):
    s = session_for(1.0, 0.0, device_table, sigma=1.5, seed=3)
    cals, _ = fit_all(s, device_table)
    assert cals[0].r_squared < 0.95
    assert "below 0.95" in caplog.text


def test_normalize_round_trip():
    cal = InstrumentCalibration("x", 1.02, -0.3, 1.0)
    assert denormalize_reading(cal, normalize_reading(cal, 281.0)) == pytest.approx(281.0)


def test_field_kinetic_temps_unknown_instrument_passes_through(device_table):
    r = ThermometerReading("nobody", 280.0, "asphalt", (0.0, 0.0))
    [t] = field_kinetic_temps([r], {}, lambda m: 0.95, device_table, 0.95)
    assert t == pytest.approx(280.0, abs=1e-3)


def test_readings_csv_round_trip():
    rs = [
        ThermometerReading("A", 280.25, "asphalt", (1.5, 2.5), 3.0, None, "T1", ""),
        ThermometerReading("B", 275.0, "water", (0.0, 0.0), 0.0, 276.15, "", ""),
        ThermometerReading("A", 279.0, "metal", (9.0, 9.0), 4.0, None, "", "17"),
    ]
    back = parse_readings_csv(readings_to_csv(rs))
    for a, b in zip(rs, back):
        assert a.instrument_id == b.instrument_id and a.target_material == b.target_material
        assert b.displayed_temp == pytest.approx(a.displayed_temp, abs=1e-9)
        assert (a.control_temp is None) == (b.control_temp is None)
        assert a.building_id == b.building_id and a.target_id == b.target_id


def test_control_bracket_averaged():
    text = "instrument_id,control_temp_C,control_end_C,displayed_temp_C\nA,3.0,3.4,2.0\n"
    [r] = parse_readings_csv(text)
    assert r.control_temp == pytest.approx(276.35)


def test_missing_column_and_bad_value():
    with pytest.raises(ParseError, match="displayed_temp_C"):
        parse_readings_csv("instrument_id,control_temp_C\nA,3\n")
    with pytest.raises(ParseError) as exc:
        parse_readings_csv("instrument_id,displayed_temp_C\nA,3\nA,warm\n")
    assert exc.value.line == 3


def test_session_requires_control():
    rs = parse_readings_csv("instrument_id,displayed_temp_C\nA,3\n")
    with pytest.raises(ParseError):
        session_from_readings(rs)


def test_calibration_csv_round_trip():
    cals = [InstrumentCalibration("A", 1.0199999, -0.3000001, 0.999)]
    back = parse_calibrations_csv(calibrations_to_csv(cals, {"B": "too few pairs"}))
    assert list(back) == ["A"]
    assert back["A"].slope == cals[0].slope and back["A"].offset == cals[0].offset
