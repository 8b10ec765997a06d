import hashlib
import json
import shutil
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from rooftemp.cli import main
from rooftemp.instrument import parse_calibrations_csv
from rooftemp.radiometry import LWIR_IMAGER
from rooftemp.raster import load_raster
from rooftemp.spectra import MaterialTable
from rooftemp.synth import random_scene_spec

SPECTRA = resources.files("rooftemp").joinpath("data", "spectra")
CHAIN = ["calibrate-instruments", "elc fit", "elc apply", "rooftemp", "validate", "overlap"]


def run(*args):
    argv = []
    for a in args:
        argv.extend(a.split(" ") if a in CHAIN else [a])
    return main(argv)


def digest(folder: Path) -> dict:
    return {str(p.relative_to(folder)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(folder.rglob("*")) if p.is_file()}


def write_spec(path, **kw):
    spec = random_scene_spec(n_buildings=9, n_targets=9, nrows=60, ncols=60, seed=kw.pop("seed", 1), **kw)
    spec.instruments = [{"instrument_id": "A", "slope": 1.02, "offset": -0.3},
                        {"instrument_id": "B", "slope": 0.98, "offset": 0.4}]
    spec.images = [
        {"image_id": "a", "flight_line": "1", "row0": 0, "col0": 0, "nrows": 60, "ncols": 40, "offset_jitter": 0.0},
        {"image_id": "b", "flight_line": "2", "row0": 0, "col0": 20, "nrows": 60, "ncols": 40, "offset_jitter": 0.0},
    ]
    path.write_text(spec.to_json())
    return spec


@pytest.fixture()
def dataset(tmp_path):
    write_spec(tmp_path / "scene.json")
    out = tmp_path / "data"
    assert run("--out", str(out), "simulate", str(tmp_path / "scene.json")) == 0
    return out


def chain(cfg, *extra):
    for cmd in CHAIN:
        code = run("--config", str(cfg), *extra, cmd)
        if code:
            return code
    return 0


def test_emissivity_flat_fixture(tmp_path):
    spectra = tmp_path / "spectra"
    spectra.mkdir()
    shutil.copy(SPECTRA / "flat.txt", spectra / "gray.txt")
    assert run("--out", str(tmp_path), "--spectra_dir=" + str(spectra), "emissivity") == 0
    table = MaterialTable.from_csv((tmp_path / "emissivity.csv").read_text())
    assert table.get("gray", LWIR_IMAGER) == pytest.approx(0.95, abs=1e-12)


def test_emissivity_empty_dir(tmp_path):
    (tmp_path / "spectra").mkdir()
    assert run("--out", str(tmp_path), f"--spectra_dir={tmp_path / 'spectra'}", "emissivity") == 0
    assert (tmp_path / "emissivity.csv").read_text() == "material,band_lo,band_hi,emissivity\n"


def test_emissivity_malformed_file(tmp_path, capsys):
    spectra = tmp_path / "spectra"
    spectra.mkdir()
    (spectra / "broken.txt").write_text("8 0.1\n9 oops\n")
    assert run("--out", str(tmp_path), f"--spectra_dir={spectra}", "emissivity") == 1
    assert "broken.txt" in capsys.readouterr().err


def test_full_chain_recovers_truth(dataset):
    cfg = dataset / "config.json"
    assert chain(cfg) == 0
    cals = parse_calibrations_csv((dataset / "calibrations.csv").read_text())
    assert cals["A"].slope == pytest.approx(1.02, abs=1e-6)
    assert cals["B"].offset == pytest.approx(0.4, abs=1e-6)
    model = json.loads((dataset / "elc_model.json").read_text())
    assert model["gain"] == pytest.approx(2.5, rel=0.01)
    assert "r_squared_before" in model and "removed_ids" in model
    truth = load_raster(dataset / "truth" / "temperature_K.asc")
    for name, col0 in (("a", 0), ("b", 20)):
        t = load_raster(dataset / "temperature" / f"{name}.asc")
        assert t.units == "degC"
        ok = t.valid
        diff = t.values[ok] + 273.15 - truth.values[:, col0:col0 + 40][ok]
        assert np.abs(diff).max() < 0.05
    rmse = json.loads((dataset / "rmse.json").read_text())
    assert all(v["rmse_K"] < 0.05 for v in rmse.values())
    assert (dataset / "overlap.csv").read_text().count("\n") > 1


def test_threads_do_not_change_outputs(dataset, tmp_path):
    other = tmp_path / "copy"
    shutil.copytree(dataset, other)
    assert chain(dataset / "config.json") == 0
    assert chain(other / "config.json", "--threads", "4") == 0
    assert digest(dataset) == digest(other)


def test_simulate_rerun_byte_identical(tmp_path):
    write_spec(tmp_path / "scene.json", noise_sigma=0.1)
    for out in ("r1", "r2"):
        assert run("--out", str(tmp_path / out), "--seed", "7", "simulate", str(tmp_path / "scene.json")) == 0
    assert digest(tmp_path / "r1") == digest(tmp_path / "r2")
    assert run("--out", str(tmp_path / "r3"), "--seed", "8", "simulate", str(tmp_path / "scene.json")) == 0
    assert digest(tmp_path / "r1")["rasters/a.asc"] != digest(tmp_path / "r3")["rasters/a.asc"]


def test_invalid_spec_exit_1(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"nrows": -1, "ncols": 3}')
    assert run("--out", str(tmp_path), "simulate", str(tmp_path / "bad.json")) == 1
    assert "error" in capsys.readouterr().err


def test_missing_control_column(dataset, capsys):
    p = dataset / "calibration_session.csv"
    p.write_text(p.read_text().replace("control_temp_C", "ctrl"))
    assert run("--config", str(dataset / "config.json"), "calibrate-instruments") == 1
    assert "control_temp_C" in capsys.readouterr().err


def test_low_r_squared_warning(tmp_path, capsys):
    write_spec(tmp_path / "scene.json")
    spec = json.loads((tmp_path / "scene.json").read_text())
    spec["calibration"]["sigma_K"] = 1.5
    (tmp_path / "scene.json").write_text(json.dumps(spec))
    run("--out", str(tmp_path / "d"), "simulate", str(tmp_path / "scene.json"))
    capsys.readouterr()
    assert run("--config", str(tmp_path / "d" / "config.json"), "calibrate-instruments") == 0
    assert "0.95" in capsys.readouterr().err


def test_all_pervious_targets_exit_1(dataset):
    p = dataset / "readings.csv"
    lines = p.read_text().splitlines()
    header = lines[0].split(",")
    mi, bi = header.index("material"), header.index("building_id")
    out = [lines[0]]
    for ln in lines[1:]:
        f = ln.split(",")
        if not f[bi]:
            f[mi] = "grass"
        out.append(",".join(f))
    p.write_text("\n".join(out) + "\n")
    assert run("--config", str(dataset / "config.json"), "calibrate-instruments") == 0
    assert run("--config", str(dataset / "config.json"), "elc", "fit") == 1


def test_apply_identity_model(dataset):
    (dataset / "identity.json").write_text(json.dumps({"gain": 1.0, "offset": 0.0}))
    assert run("--config", str(dataset / "config.json"), "--model=identity.json", "elc", "apply") == 0
    a = load_raster(dataset / "rasters" / "a.asc")
    g = load_raster(dataset / "ground" / "a.asc")
    assert np.array_equal(a.values, g.values)


def test_missing_material_exit_1(dataset, capsys):
    p = dataset / "footprints.geojson"
    p.write_text(p.read_text().replace('"material": "tar"', '"material": "slate"', 1))
    cfg = str(dataset / "config.json")
    for cmd in ("calibrate-instruments", "elc fit", "elc apply"):
        assert run("--config", cfg, cmd) == 0
    assert run("--config", cfg, "rooftemp") == 1
    assert "slate" in capsys.readouterr().err


def test_out_of_table_fraction_exit_2(dataset):
    cfg = str(dataset / "config.json")
    for cmd in ("calibrate-instruments", "elc fit"):
        assert run("--config", cfg, cmd) == 0
    (dataset / "hot.json").write_text(json.dumps({"gain": 10.0, "offset": 0.0}))
    assert run("--config", cfg, "--model=hot.json", "elc", "apply") == 0
    assert run("--config", cfg, "rooftemp") == 2
    assert run("--config", cfg, "--max_invalid_fraction=1.0", "rooftemp") == 0


def test_empty_validation(dataset):
    cfg = str(dataset / "config.json")
    assert chain(cfg) == 0
    (dataset / "readings.csv").write_text((dataset / "readings.csv").read_text().splitlines()[0] + "\n")
    assert run("--config", cfg, "validate") == 0
    assert (dataset / "validation.csv").read_text().count("\n") == 1
    assert json.loads((dataset / "rmse.json").read_text()) == {}


def test_nested_override(dataset):
    cfg = str(dataset / "config.json")
    assert run("--config", cfg, "calibrate-instruments") == 0
    assert run("--config", cfg, "--elc.cooks_rule=none", "elc", "fit") == 0
    model = json.loads((dataset / "elc_model.json").read_text())
    assert model["removed_ids"] == []


def test_missing_config_file(tmp_path):
    assert run("--config", str(tmp_path / "nope.json"), "overlap") == 1
