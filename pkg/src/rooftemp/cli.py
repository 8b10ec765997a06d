"""Command-line interface.

    rooftemp [--config PATH] [--out DIR] [--threads N] [--seed N] [--key=value ...] COMMAND

Commands: emissivity, calibrate-instruments, elc fit, elc apply, rooftemp,
validate, overlap, simulate. Any config key (dotted for nested keys, e.g.
``--elc.window=1``) can be overridden on the command line.

Exit codes: 0 success, 1 input or configuration error, 2 too many pixels fell
outside the physical range (see ``max_invalid_fraction``).
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import elc, instrument, pipeline, synth
from .errors import ConfigError, RooftempError
from .radiometry import PlanckTable, WavelengthBand, build_planck_table, celsius
from .raster import load_raster, parse_footprints, rasterize, save_raster
from .spectra import MaterialTable, emissivity_curve, material_table, read_spectral_curve, reference_table

log = logging.getLogger("rooftemp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
RASTER_SUFFIXES = (".asc", ".f64")
LOSSLESS = 17  # significant digits that round-trip a float64

DEFAULTS = {
    "spectra_dir": "spectra",
    "rasters_dir": "rasters",
    "ground_dir": None,
    "footprints": "footprints.geojson",
    "readings": "readings.csv",
    "calibration_session": "calibration_session.csv",
    "calibrations": None,
    "materials": None,
    "model": None,
    "reports": None,
    "scene": "scene.json",
    "band": [8.0, 9.2],
    "device_band": [8.0, 14.0],
    "planck": {"t_min": 230.0, "t_max": 330.0, "t_step": 0.1, "lambda_step": 0.001},
    "elc": {"window": 3, "cooks_rule": "4/n"},
    "t_ref": 300.0,
    "device_emissivity": instrument.DEVICE_EMISSIVITY,
    "medium_emissivity": instrument.WATER_EMISSIVITY,
    "max_invalid_fraction": 0.05,
    "out": "out",
    "threads": 1,
    "seed": None,
}


class NumericalDomainError(RooftempError):
    pass


@dataclass
class RunConfig:
    data: dict
    base: Path

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        base = Path.cwd()
        if path:
            p = Path(path)
            try:
                user = json.loads(p.read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file {path} not found") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
            _merge(data, user)
            base = p.resolve().parent
        for key, value in overrides.items():
            _set_dotted(data, key, value)
        return cls(data, base)

    def __getitem__(self, key):
        return self.data[key]

    def path(self, key, required=True) -> Path | None:
        value = self.data.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config key {key!r} is required for this command")
            return None
        p = Path(value)
        p = p if p.is_absolute() else self.base / p
        if required and not p.exists():
            raise ConfigError(f"{key}: {p} does not exist")
        return p

    @property
    def out(self) -> Path:
        p = Path(self.data["out"])
        p = p if p.is_absolute() else self.base / p
        p.mkdir(parents=True, exist_ok=True)
        return p

    def band(self, key="band") -> WavelengthBand:
        lo, hi = self.data[key]
        return WavelengthBand(float(lo), float(hi))

    def table(self, key="band") -> PlanckTable:
        pl = self.data["planck"]
        return build_planck_table(self.band(key), pl["t_min"], pl["t_max"], pl["t_step"], pl["lambda_step"])

    def materials(self) -> MaterialTable:
        table = reference_table()
        extra = self.path("materials", required=False)
        if extra is not None:
            if not extra.exists():
                raise ConfigError(f"materials: {extra} does not exist")
            table = table.merged(MaterialTable.from_csv(extra.read_text()))
        return table

    def calibrations(self) -> dict:
        p = self.path("calibrations", required=False)
        if p is None:
            default = self.out / "calibrations.csv"
            p = default if default.exists() else None
        if p is None:
            return {}
        if not p.exists():
            raise ConfigError(f"calibrations: {p} does not exist")
        return instrument.parse_calibrations_csv(p.read_text())


def _merge(dst: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = v


def _set_dotted(data: dict, key: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path




def _raster_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix in RASTER_SUFFIXES)


def _load_rasters(directory: Path):
    files = _raster_files(directory)
    if not files:
        raise ConfigError(f"no rasters (*.asc, *.f64) in {directory}")
    return [load_raster(p) for p in files]


def _map(cfg: RunConfig, fn, items):
    threads = int(cfg["threads"] or 1)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# commands --------------------------------------------------------------------

def cmd_emissivity(cfg: RunConfig, args) -> int:
    spectra_dir = cfg.path("spectra_dir")
    bands = [cfg.band("band"), cfg.band("device_band")]
    curves = []
    for p in sorted(spectra_dir.iterdir()):
        if not p.is_file() or p.name.startswith("."):
            continue
        try:
            curves.append(emissivity_curve(read_spectral_curve(p)))
        except RooftempError as exc:
            raise ConfigError(f"{p.name}: {exc}") from None
    table = material_table(curves, bands, cfg["t_ref"], cfg["planck"]["lambda_step"])
    out = _write(cfg.out / "emissivity.csv", table.to_csv())
    print(f"{len(table)} materials -> {out}")
    return EXIT_OK


def cmd_calibrate_instruments(cfg: RunConfig, args) -> int:
    path = cfg.path("calibration_session")
    text = path.read_text()
    header = text.splitlines()[0] if text else ""
    if "control_temp_C" not in header.split(","):
        raise ConfigError(f"{path.name}: missing column 'control_temp_C'")
    readings = instrument.parse_readings_csv(text, str(path))
    session = instrument.session_from_readings(
        readings, cfg["device_emissivity"], cfg["medium_emissivity"], str(path)
    )
    cals, errors = instrument.fit_all(session, cfg.table("device_band"))
    for c in cals:
        flag = "" if c.r_squared >= instrument.R2_WARNING else "  WARNING: R^2 below 0.95"
        print(f"{c.instrument_id}: slope {c.slope:.6f} offset {c.offset:+.4f} K R^2 {c.r_squared:.4f}{flag}")
        if flag:
            print(f"warning: instrument {c.instrument_id} R^2 {c.r_squared:.3f} < 0.95", file=sys.stderr)
    for iid, msg in sorted(errors.items()):
        print(f"error: {msg}", file=sys.stderr)
    _write(cfg.out / "calibrations.csv", instrument.calibrations_to_csv(cals, errors))
    return EXIT_OK


def cmd_elc_fit(cfg: RunConfig, args) -> int:
    materials = cfg.materials()
    img_table, dev_table = cfg.table("band"), cfg.table("device_band")
    rasters = _load_rasters(cfg.path("rasters_dir"))
    readings = instrument.parse_readings_csv(cfg.path("readings").read_text(), str(cfg.path("readings")))
    target_readings, _ = pipeline.split_readings(readings)
    targets = pipeline.field_targets(target_readings, cfg.calibrations(), materials, dev_table, cfg["device_emissivity"])
    pairs = elc.prepare_pairs(targets, materials, rasters, img_table, int(cfg["elc"]["window"]))
    fit_pairs = elc.filter_impervious(pairs)
    if len(fit_pairs) < 3:
        raise ConfigError(f"only {len(fit_pairs)} impervious targets; ELC needs at least 3")
    first = elc.fit_elc(fit_pairs, img_table.band)
    pruned = elc.prune_and_refit(fit_pairs, first[1], cfg["elc"]["cooks_rule"], img_table.band)
    out = cfg.out
    _write(out / "pairs.csv", elc.pairs_to_csv(pairs))
    _write(out / "elc_diagnostics.json", elc.dumps(elc.diagnostics_report(pairs, first, pruned)))
    model = pruned.model.to_dict()
    model.update(r_squared_before=pruned.r_squared_before, removed_ids=list(pruned.removed_ids))
    _write(out / "elc_model.json", elc.dumps(model))
    print(f"ELC: ground = {pruned.model.gain:.4f} * sensor {pruned.model.offset:+.4f}; "
          f"R^2 {pruned.r_squared_before:.3f} -> {pruned.r_squared_after:.3f}, removed {list(pruned.removed_ids)}")
    return EXIT_OK


def _model(cfg: RunConfig) -> elc.ELCModel:
    p = cfg.path("model", required=False) or cfg.out / "elc_model.json"
    if not p.exists():
        raise ConfigError(f"ELC model {p} not found; run 'elc fit' first")
    return elc.ELCModel.from_dict(json.loads(p.read_text()))


def _ground_dir(cfg: RunConfig) -> Path:
    return cfg.path("ground_dir", required=False) or cfg.out / "ground"


def cmd_elc_apply(cfg: RunConfig, args) -> int:
    model = _model(cfg)
    rasters = _load_rasters(cfg.path("rasters_dir"))
    gdir = _ground_dir(cfg)
    gdir.mkdir(parents=True, exist_ok=True)
    results = _map(cfg, lambda r: pipeline.correct_raster(r, model), rasters)
    counts = {}
    for raster, (ground, n_bad) in zip(rasters, results):
        save_raster(ground, gdir / f"{raster.image_id}.asc", digits=LOSSLESS)
        counts[raster.image_id] = n_bad
    _write(cfg.out / "elc_apply_summary.json", elc.dumps({"model": model.to_dict(), "nonpositive_pixels": counts}))
    print(f"corrected {len(rasters)} rasters -> {gdir}")
    return EXIT_OK


def cmd_rooftemp(cfg: RunConfig, args) -> int:
    materials = cfg.materials()
    table = cfg.table("band")
    footprints = parse_footprints(cfg.path("footprints").read_text(), str(cfg.path("footprints")))
    pipeline.check_materials(footprints, materials, table.band)
    gdir = _ground_dir(cfg)
    if not gdir.exists():
        raise ConfigError(f"ground-leaving raster directory {gdir} not found; run 'elc apply' first")
    grounds = _load_rasters(gdir)

    def one(ground):
        mask = rasterize(footprints, ground)
        return pipeline.rooftop_temperatures(ground, mask, footprints, materials, table)

    results = _map(cfg, one, grounds)
    tdir = cfg.out / "temperature"
    tdir.mkdir(parents=True, exist_ok=True)
    summary = pipeline.RunSummary(parameters={"band": table.band.label(), **cfg["planck"]})
    apply_log = gdir.parent / "elc_apply_summary.json"
    nonpositive = {}
    if apply_log.exists():
        applied = json.loads(apply_log.read_text())
        summary.model = applied.get("model", {})
        nonpositive = applied.get("nonpositive_pixels", {})
    reports = []
    for ground, res in zip(grounds, results):
        t = res.temperature
        vals = np.where(t.valid, celsius(t.values), t.nodata)
        save_raster(t.with_values(vals, units="degC"), tdir / f"{ground.image_id}.asc", digits=9)
        n_valid = int(np.count_nonzero(ground.valid)) + nonpositive.get(ground.image_id, 0)
        summary.add_image(ground.image_id, n_valid, nonpositive.get(ground.image_id, 0), res.out_of_table)
        reports.extend(res.reports)
    _write(cfg.out / "buildings.csv", pipeline.reports_to_csv(reports))
    _write(cfg.out / "run_summary.json", elc.dumps(summary.to_dict()))
    print(f"{len(reports)} building reports from {len(grounds)} images")
    roof_pixels = sum(int(np.count_nonzero(r.temperature.valid)) + r.out_of_table for r in results)
    bad = sum(r.out_of_table for r in results)
    if roof_pixels and bad / roof_pixels > float(cfg["max_invalid_fraction"]):
        raise NumericalDomainError(
            f"{bad} of {roof_pixels} roof pixels fell outside the Planck table (limit {cfg['max_invalid_fraction']})"
        )
    return EXIT_OK


def _reports(cfg: RunConfig):
    p = cfg.path("reports", required=False) or cfg.out / "buildings.csv"
    if not p.exists():
        raise ConfigError(f"building reports {p} not found; run 'rooftemp' first")
    return pipeline.parse_reports_csv(p.read_text())


def cmd_validate(cfg: RunConfig, args) -> int:
    reports = _reports(cfg)
    readings = instrument.parse_readings_csv(cfg.path("readings").read_text(), str(cfg.path("readings")))
    _, roofs = pipeline.split_readings(readings)
    field = pipeline.roof_field_temps(roofs, cfg.calibrations(), cfg.materials(), cfg.table("device_band"),
                                      cfg["device_emissivity"])
    records = pipeline.validation_records(reports, field)
    errors = pipeline.rmse_by_material(records)
    _write(cfg.out / "validation.csv", pipeline.validation_to_csv(records))
    _write(cfg.out / "rmse.json", elc.dumps(pipeline.rmse_summary(errors)))
    for mat, e in errors.items():
        print(f"{mat}: RMSE {e.rmse:.3f} degC, mean error {e.mean_error:+.3f} degC, n={e.n}")
    return EXIT_OK


def cmd_overlap(cfg: RunConfig, args) -> int:
    rows = pipeline.overlap_report(_reports(cfg))
    _write(cfg.out / "overlap.csv", pipeline.overlap_to_csv(rows))
    print(f"{len(rows)} overlapping image pairs")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    spec_path = Path(args.spec) if args.spec else cfg.path("scene")
    if not spec_path.exists():
        raise ConfigError(f"scene spec {spec_path} not found")
    spec = synth.SceneSpec.from_json(spec_path.read_text())
    if cfg["seed"] is not None:
        spec.seed = int(cfg["seed"])
        spec.atmosphere = {**spec.atmosphere, "seed": int(cfg["seed"])}
    materials = cfg.materials()
    dev_table = cfg.table("device_band")
    img_table = build_planck_table(spec.band, **cfg["planck"])
    scene = synth.generate_scene(spec, materials, dev_table)
    rasters = synth.simulate_images(scene, spec, img_table)
    out = cfg.out
    rdir = out / "rasters"
    rdir.mkdir(parents=True, exist_ok=True)
    for r in rasters:
        save_raster(r, rdir / f"{r.image_id}.asc", digits=LOSSLESS)
    truth = out / "truth"
    truth.mkdir(exist_ok=True)
    save_raster(scene.temperature, truth / "temperature_K.asc", digits=LOSSLESS)
    save_raster(scene.emissivity, truth / "emissivity.asc", digits=LOSSLESS)
    from .raster import footprints_to_geojson

    _write(out / "footprints.geojson", footprints_to_geojson(scene.footprints))
    _write(out / "readings.csv", instrument.readings_to_csv(scene.readings))
    _write(out / "calibration_session.csv", instrument.readings_to_csv(scene.calibration_readings))
    _write(out / "scene.json", spec.to_json())
    run_cfg = {
        "rasters_dir": "rasters", "footprints": "footprints.geojson", "readings": "readings.csv",
        "calibration_session": "calibration_session.csv", "calibrations": "calibrations.csv",
        "band": [spec.band.lambda_lo, spec.band.lambda_hi], "out": ".",
        "device_emissivity": spec.device_emissivity, "medium_emissivity": spec.medium_emissivity,
    }
    _write(out / "config.json", elc.dumps(run_cfg))
    print(f"simulated {len(rasters)} images, {len(scene.footprints)} buildings -> {out}")
    return EXIT_OK


# entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rooftemp", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, help="worker threads for per-image work")
    ap.add_argument("--seed", type=int, help="override the simulation seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("emissivity", help="band emissivity table from reflectance spectra")
    sub.add_parser("calibrate-instruments", help="fit IR thermometer normalization")
    p_elc = sub.add_parser("elc", help="empirical line calibration")
    p_elc.add_argument("action", choices=["fit", "apply"])
    sub.add_parser("rooftemp", help="rooftop temperature maps and building reports")
    sub.add_parser("validate", help="compare building temperatures with roof field readings")
    sub.add_parser("overlap", help="temperature differences of buildings seen in several images")
    p_sim = sub.add_parser("simulate", help="synthetic dataset from a scene spec")
    p_sim.add_argument("spec", nargs="?", help="scene spec JSON (default: config key 'scene')")
    return ap


COMMANDS = {
    "emissivity": cmd_emissivity,
    "calibrate-instruments": cmd_calibrate_instruments,
    "rooftemp": cmd_rooftemp,
    "validate": cmd_validate,
    "overlap": cmd_overlap,
    "simulate": cmd_simulate,
}


def _split_overrides(argv):
    """Pull ``--key=value`` pairs that argparse does not know about."""
    known = {"--config", "--out", "--threads", "--seed"}
    rest, overrides = [], {}
    for a in argv:
        if a.startswith("--") and "=" in a and a.split("=", 1)[0] not in known:
            k, v = a[2:].split("=", 1)
            overrides[k] = v
        else:
            rest.append(a)
    return rest, overrides


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    argv, overrides = _split_overrides(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    for key in ("out", "threads", "seed"):
        if getattr(args, key) is not None:
            overrides[key] = json.dumps(getattr(args, key))
    try:
        cfg = RunConfig.load(args.config, overrides)
        if args.command == "elc":
            return cmd_elc_fit(cfg, args) if args.action == "fit" else cmd_elc_apply(cfg, args)
        return COMMANDS[args.command](cfg, args)
    except NumericalDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RooftempError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
