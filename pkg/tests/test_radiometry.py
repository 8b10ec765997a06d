import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rooftemp.errors import DomainError, OutOfTableError
from rooftemp.radiometry import (
    C1,
    C2,
    LWIR_DEVICE,
    LWIR_IMAGER,
    PlanckTable,
    WavelengthBand,
    band_exitance,
    build_planck_table,
    invert_band_exitance,
    rescale_exitance,
    spectral_exitance,
    wavelength_grid,
)

# Frozen from an mpmath evaluation at 30 digits (scripts/oracle_values.py).
ORACLE_SPECTRAL_10UM_300K = 31.1772702037303
ORACLE_BAND_8_14_300K = 172.578558697738
ORACLE_BAND_8_92_300K = 36.0983628661842
ORACLE_BAND_8_92_27615K = 22.2650513708571


def test_constants_from_exact_si():
    assert C1 == pytest.approx(3.741771852e8, rel=1e-9)
    assert C2 == pytest.approx(1.438776877e4, rel=1e-9)


def test_spectral_exitance_oracle():
    assert spectral_exitance(10.0, 300.0) == pytest.approx(ORACLE_SPECTRAL_10UM_300K, rel=1e-12)


def test_spectral_exitance_rejects_nonpositive():
    with pytest.raises(DomainError):
        spectral_exitance(10.0, 0.0)
    with pytest.raises(DomainError):
        spectral_exitance(-1.0, 300.0)


def test_wien_peak_near_9_66_um():
    lam = np.linspace(5, 15, 20001)
    peak = lam[np.argmax(spectral_exitance(lam, 300.0))]
    assert peak == pytest.approx(2897.771955 / 300.0, abs=1e-3)


@pytest.mark.parametrize("band,temp,expected", [
    (LWIR_DEVICE, 300.0, ORACLE_BAND_8_14_300K),
    (LWIR_IMAGER, 300.0, ORACLE_BAND_8_92_300K),
    (LWIR_IMAGER, 276.15, ORACLE_BAND_8_92_27615K),
])
def test_band_exitance_oracle(band, temp, expected):
    assert band_exitance(band, temp) == pytest.approx(expected, rel=1e-6)


def test_band_exitance_vectorized_matches_scalar():
    temps = np.array([[250.0, 270.0], [290.0, 310.0]])
    vec = band_exitance(LWIR_IMAGER, temps)
    assert vec.shape == temps.shape
    for t, m in zip(temps.ravel(), vec.ravel()):
        assert m == pytest.approx(band_exitance(LWIR_IMAGER, float(t)), rel=1e-14)


def test_wavelength_grid_endpoints():
    g = wavelength_grid(LWIR_IMAGER)
    assert g[0] == 8.0 and g[-1] == 9.2
    assert np.allclose(np.diff(g), 0.001)


def test_band_parse_and_order():
    b = WavelengthBand.parse("8-9.2")
    assert b == LWIR_IMAGER
    assert b.width == pytest.approx(1.2)
    with pytest.raises(ValueError):
        WavelengthBand(9.0, 8.0)


def test_default_table_shape(imager_table):
    assert len(imager_table.temperatures) == 1001
    assert imager_table.temperatures[0] == 230.0
    assert imager_table.temperatures[-1] == pytest.approx(330.0)
    assert np.all(np.diff(imager_table.exitances) > 0)


def test_table_entries_match_direct(imager_table):
    for t, m in imager_table.entries[::100]:
        assert m == pytest.approx(band_exitance(LWIR_IMAGER, t), rel=1e-14)


def test_invert_at_grid_nodes_is_exact(imager_table):
    t = imager_table.temperatures[::37]
    assert np.allclose(invert_band_exitance(imager_table, imager_table.exitances[::37]), t, atol=1e-9)


def test_invert_out_of_range(imager_table):
    lo, hi = imager_table.exitance_range
    with pytest.raises(OutOfTableError):
        invert_band_exitance(imager_table, hi * 1.01)
    out = invert_band_exitance(imager_table, np.array([lo * 0.5, lo, hi]), out_of_range="nan")
    assert math.isnan(out[0]) and out[1] == pytest.approx(230.0) and out[2] == pytest.approx(330.0)


def test_inversion_error_bound(imager_table):
    # linear interpolation of a convex curve: error bounded by the table spacing
    t = np.linspace(230.05, 329.95, 999)
    err = np.abs(invert_band_exitance(imager_table, band_exitance(LWIR_IMAGER, t)) - t)
    assert err.max() < 1e-3


def test_table_rejects_bad_step():
    with pytest.raises(ValueError):
        build_planck_table(LWIR_IMAGER, 230.0, 330.0, 0.3)


def test_table_csv_round_trip(tmp_path):
    table = build_planck_table(LWIR_IMAGER, 260.0, 270.0, 0.5)
    table.to_csv(tmp_path / "t.csv")
    back = PlanckTable.from_csv(tmp_path / "t.csv")
    assert back.band == table.band
    assert np.array_equal(back.temperatures, table.temperatures)
    assert np.allclose(back.exitances, table.exitances, rtol=1e-15)


def test_rescale_exitance():
    assert rescale_exitance(100.0, 0.5, 1.0) == pytest.approx(200.0)
    with pytest.raises(DomainError):
        rescale_exitance(100.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        rescale_exitance(100.0, 0.5, 1.2)


@settings(max_examples=60, deadline=None)
@given(st.floats(231.0, 329.0), st.floats(0.01, 2.0))
def test_band_exitance_monotone_in_temperature(t, dt):
    assert band_exitance(LWIR_IMAGER, t + dt) > band_exitance(LWIR_IMAGER, t)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(231.0, 329.0))
def test_round_trip_property(imager_table, t):
    assert abs(float(invert_band_exitance(imager_table, band_exitance(LWIR_IMAGER, t))) - t) <= 0.05
