import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rooftemp.elc import ELCModel
from rooftemp.errors import ConfigError, MaterialLookupError
from rooftemp.pipeline import (
    BuildingReport,
    ValidationRecord,
    check_materials,
    correct_raster,
    overlap_report,
    parse_reports_csv,
    process,
    reports_to_csv,
    rmse_by_material,
    rooftop_temperatures,
    validation_records,
)
from rooftemp.radiometry import LWIR_DEVICE, LWIR_IMAGER, band_exitance, kelvin
from rooftemp.raster import Building, FootprintSet, RadianceRaster, rasterize
from rooftemp.spectra import MaterialTable
from rooftemp.synth import generate_scene, random_scene_spec, simulate_images


def square(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def blackbody_table():
    t = MaterialTable()
    t.set("black", LWIR_IMAGER, 1.0)
    t.set("gray", LWIR_IMAGER, 0.8)
    return t


def test_one_building_unit_emissivity_is_direct_inversion(imager_table):
    vals = np.full((6, 6), band_exitance(LWIR_IMAGER, 281.3))
    ground = RadianceRaster(vals, (0.0, 0.0), 1.0)
    fp = FootprintSet((Building("1", "black", (square(1, 1, 4, 4),)),))
    res = rooftop_temperatures(ground, rasterize(fp, ground), fp, blackbody_table(), imager_table)
    [rep] = res.reports
    assert rep.pixel_count == 9
    assert rep.mean_temp == pytest.approx(281.3, abs=1e-3)
    assert res.temperature.values[0, 0] == ground.nodata


def test_report_mean_is_mean_of_pixels(imager_table):
    rng = np.random.default_rng(4)
    vals = band_exitance(LWIR_IMAGER, rng.uniform(260, 300, (12, 12))) * 0.8
    vals[5, 5] = -9999.0
    ground = RadianceRaster(vals, (0.0, 0.0), 1.0)
    fp = FootprintSet((Building("7", "gray", (square(2, 2, 9, 10),)),))
    mask = rasterize(fp, ground)
    res = rooftop_temperatures(ground, mask, fp, blackbody_table(), imager_table)
    cells = mask.cells_of("7") & ground.valid
    pix = res.temperature.values[cells]
    [rep] = res.reports
    assert rep.pixel_count == pix.size == 55
    assert rep.mean_temp == pytest.approx(pix.mean(), rel=1e-14)
    assert rep.min_temp == pix.min() and rep.max_temp == pix.max()
    assert res.unmasked_invalid == 1


def test_out_of_table_pixels_counted(imager_table):
    vals = np.full((4, 4), band_exitance(LWIR_IMAGER, 280.0))
    vals[1, 1] = 1000.0
    ground = RadianceRaster(vals, (0.0, 0.0), 1.0)
    fp = FootprintSet((Building("1", "black", (square(0, 0, 4, 4),)),))
    res = rooftop_temperatures(ground, rasterize(fp, ground), fp, blackbody_table(), imager_table)
    assert res.out_of_table == 1
    assert res.reports[0].pixel_count == 15


@settings(max_examples=50, deadline=None)
@given(st.floats(8.0, 35.0), st.floats(0.01, 3.0), st.floats(0.5, 1.0))
def test_monotone_in_ground_exitance(imager_table, m, dm, eps):
    lo, hi = imager_table.exitance_range
    if not (lo <= m / eps and (m + dm) / eps <= hi):
        return
    vals = np.array([[m, m + dm]])
    ground = RadianceRaster(vals, (0.0, 0.0), 1.0)
    fp = FootprintSet((Building("1", "x", (square(0, 0, 1, 1),)), Building("2", "x", (square(1, 0, 2, 1),))))
    mats = MaterialTable()
    mats.set("x", LWIR_IMAGER, eps)
    res = rooftop_temperatures(ground, rasterize(fp, ground), fp, mats, imager_table)
    t = res.temperature.values[0]
    assert t[1] >= t[0]


def test_correct_raster_identity_and_band_check():
    r = RadianceRaster(np.array([[1.0, -9999.0], [3.0, 4.0]]), (0.0, 0.0), 1.0)
    out, n_bad = correct_raster(r, ELCModel(1.0, 0.0, 1.0, 3, LWIR_IMAGER))
    assert np.array_equal(out.values, r.values) and n_bad == 0
    out, n_bad = correct_raster(r, ELCModel(1.0, -2.0, 1.0, 3))
    assert n_bad == 1 and out.values[0, 0] == -9999.0
    with pytest.raises(ConfigError):
        correct_raster(r, ELCModel(1.0, 0.0, 1.0, 3, LWIR_DEVICE))


def test_missing_material_named(materials):
    fp = FootprintSet((Building("12", "slate", (square(0, 0, 1, 1),)),))
    with pytest.raises(MaterialLookupError, match="slate"):
        check_materials(fp, materials, LWIR_IMAGER)


def test_rmse_matches_one_line_oracle():
    rng = np.random.default_rng(0)
    recs = [ValidationRecord(str(i), ("asphalt", "metal")[i % 2], 280 + rng.normal(), 280.0, "a") for i in range(21)]
    errs = rmse_by_material(recs)
    for mat in ("asphalt", "metal"):
        oracle = np.sqrt(np.mean([(r.predicted_temp - r.field_temp) ** 2 for r in recs if r.material == mat]))
        assert errs[mat].rmse == pytest.approx(oracle, rel=1e-14)
    assert errs["asphalt"].n == 11


def test_exact_predictions_have_zero_rmse():
    recs = [ValidationRecord("1", "tar", 280.0, 280.0, "a")]
    assert rmse_by_material(recs)["tar"].rmse == 0.0
    assert rmse_by_material([]) == {}


def test_validation_matches_by_building_id():
    reps = [BuildingReport("1", "tar", "a", 5, 280.0, 279.0, 281.0), BuildingReport("2", "tar", "a", 5, 281.0, 280.0, 282.0)]
    recs = validation_records(reps, {"2": 280.5, "9": 1.0})
    assert [(r.building_id, r.field_temp) for r in recs] == [("2", 280.5)]


def test_overlap_case_one():
    reps = [BuildingReport("A", "asphalt", "3749", 10, kelvin(5.85860), 0, 0, "39"),
            BuildingReport("A", "asphalt", "3750", 10, kelvin(5.65984), 0, 0, "39")]
    [row] = overlap_report(reps)
    assert row.delta == pytest.approx(0.19876, abs=1e-9)
    assert row.same_flight_line


def test_reports_csv_round_trip():
    reps = [BuildingReport("1", "metal", "img", 12, 271.23456, 270.0, 272.5, "3")]
    text = reports_to_csv(reps)
    assert text.startswith("#")
    assert "-1.91544" in text
    [back] = parse_reports_csv(text)
    assert back.mean_temp == pytest.approx(271.23456, abs=1e-9)
    assert back.flight_line == "3"


@pytest.fixture(scope="module")
def small_scene(materials, device_table, imager_table):
    spec = random_scene_spec(n_buildings=16, n_targets=16, nrows=128, ncols=128, seed=2)
    scene = generate_scene(spec, materials, device_table)
    return spec, scene, simulate_images(scene, spec, imager_table)


def test_end_to_end_small_scene(small_scene, materials, device_table, imager_table):
    spec, scene, rasters = small_scene
    res = process(rasters, scene.footprints, scene.readings, materials, imager_table, device_table)
    # ELC recovers the inverse of the forward atmosphere
    assert res.model.gain == pytest.approx(1 / 0.4, rel=0.01)
    assert res.model.offset == pytest.approx(-3.0 / 0.4, rel=0.01)
    truth = scene.temperature.values
    for rt in res.rooftops:
        ok = rt.temperature.valid
        assert np.abs(rt.temperature.values[ok] - truth[ok]).max() <= 0.05
    assert all(abs(v.predicted_temp - v.field_temp) < 0.05 for v in res.validation)


def test_noise_raises_recovery_error(materials, device_table, imager_table):
    spec = random_scene_spec(n_buildings=16, n_targets=16, nrows=128, ncols=128, seed=5)
    scene = generate_scene(spec, materials, device_table)
    rmses = []
    for sigma in (0.0, 0.1, 0.4):
        errs = []
        for seed in range(3):
            spec.atmosphere = {**spec.atmosphere, "noise_sigma": sigma, "seed": seed}
            rasters = simulate_images(scene, spec, imager_table)
            res = process(rasters, scene.footprints, scene.readings, materials, imager_table, device_table)
            for rt in res.rooftops:
                ok = rt.temperature.valid
                errs.append(rt.temperature.values[ok] - scene.temperature.values[ok])
        rmses.append(float(np.sqrt(np.mean(np.concatenate(errs) ** 2))))
    assert rmses[0] < rmses[1] < rmses[2]
