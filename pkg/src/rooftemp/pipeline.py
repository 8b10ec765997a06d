"""Atmospheric and emissivity correction of imagery into rooftop temperatures, plus validation."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .elc import ELCModel, FieldTarget, apply_elc
from .errors import ConfigError, MaterialLookupError
from .instrument import DEVICE_EMISSIVITY, InstrumentCalibration, field_kinetic_temps
from .radiometry import PlanckTable, celsius, invert_band_exitance
from .raster import BuildingMask, FootprintSet, RadianceRaster
from .spectra import MaterialTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuildingReport:
    building_id: str
    material: str
    image_id: str
    pixel_count: int
    mean_temp: float  # K
    min_temp: float
    max_temp: float
    flight_line: str = ""


@dataclass(frozen=True)
class ValidationRecord:
    building_id: str
    material: str
    predicted_temp: float  # K
    field_temp: float
    image_id: str = ""


@dataclass(frozen=True)
class MaterialError:
    rmse: float
    n: int
    mean_error: float


@dataclass(frozen=True)
class OverlapRow:
    building_id: str
    image_a: str
    image_b: str
    temp_a: float
    temp_b: float
    delta: float
    same_flight_line: bool


@dataclass
class RooftopResult:
    temperature: RadianceRaster
    reports: list[BuildingReport]
    out_of_table: int = 0
    unmasked_invalid: int = 0


def correct_raster(raster: RadianceRaster, model: ELCModel) -> tuple[RadianceRaster, int]:
    """Map at-sensor exitance to ground-leaving exitance.

    Returns the corrected raster and the number of valid input pixels whose
    corrected value was non-positive (those become nodata).
    """
    if model.band is not None and model.band != raster.band:
        raise ConfigError(
            f"raster {raster.image_id} band {raster.band.label()} um does not match model band {model.band.label()} um"
        )
    ok = raster.valid
    out = np.full(raster.values.shape, raster.nodata, dtype=float)
    corrected = apply_elc(model, raster.values[ok])
    good = corrected > 0
    vals = out[ok]
    vals[good] = corrected[good]
    out[ok] = vals
    return raster.with_values(out), int(np.count_nonzero(~good))


def _table_for(tables, band) -> PlanckTable:
    if isinstance(tables, PlanckTable):
        if tables.band != band:
            raise ConfigError(f"Planck table band {tables.band.label()} does not match raster band {band.label()}")
        return tables
    try:
        return tables[band]
    except KeyError:
        raise ConfigError(f"no Planck table for band {band.label()} um") from None


def rooftop_temperatures(
    ground: RadianceRaster,
    mask: BuildingMask,
    footprints: FootprintSet,
    materials: MaterialTable,
    tables,
) -> RooftopResult:
    """Blackbody-equivalent exitance per roof pixel, inverted to kinetic temperature (K)."""
    table = _table_for(tables, ground.band)
    eps_of = {}
    for b in footprints.buildings:
        eps_of[b.building_id] = materials.get(b.material, ground.band)
    if mask.index.shape != ground.values.shape:
        raise ConfigError("building mask does not match raster dimensions")
    eps_by_index = np.array([eps_of[bid] for bid in mask.ids] + [np.nan])
    idx = mask.index
    in_building = idx >= 0
    ok = in_building & ground.valid
    eps = eps_by_index[idx[ok]]
    m_bb = ground.values[ok] / eps
    temps = invert_band_exitance(table, m_bb, out_of_range="nan")
    n_bad = int(np.count_nonzero(np.isnan(temps)))
    out = np.full(ground.values.shape, ground.nodata, dtype=float)
    tv = np.where(np.isnan(temps), ground.nodata, temps)
    out[ok] = tv
    temp_raster = ground.with_values(out, units="K")

    reports = []
    materials_of = {b.building_id: b.material for b in footprints.buildings}
    flat_idx = idx[ok]
    good = ~np.isnan(temps)
    for i, bid in enumerate(mask.ids):
        sel = (flat_idx == i) & good
        n = int(np.count_nonzero(sel))
        if n == 0:
            continue
        t = temps[sel]
        reports.append(BuildingReport(
            bid, materials_of[bid], ground.image_id, n,
            float(t.mean()), float(t.min()), float(t.max()), ground.flight_line,
        ))
    return RooftopResult(temp_raster, reports, n_bad, int(np.count_nonzero(in_building & ~ground.valid)))


def rmse_by_material(records) -> dict[str, MaterialError]:
    groups: dict[str, list[float]] = defaultdict(list)
    for r in records:
        groups[r.material].append(r.predicted_temp - r.field_temp)
    out = {}
    for mat in sorted(groups):
        err = np.array(groups[mat])
        out[mat] = MaterialError(float(np.sqrt(np.mean(err**2))), int(err.size), float(err.mean()))
    return out


def overlap_report(reports) -> list[OverlapRow]:
    """Every pair of reports of the same building from different images."""
    by_building: dict[str, list[BuildingReport]] = defaultdict(list)
    for r in reports:
        by_building[r.building_id].append(r)
    rows = []
    for bid, group in by_building.items():
        for a, b in itertools.combinations(group, 2):
            rows.append(OverlapRow(
                bid, a.image_id, b.image_id, a.mean_temp, b.mean_temp,
                a.mean_temp - b.mean_temp, a.flight_line == b.flight_line,
            ))
    rows.sort(key=lambda r: -abs(r.delta))
    return rows


def validation_records(reports, field_temps: dict[str, float]) -> list[ValidationRecord]:
    """Match image-derived building temperatures to field temperatures by building id."""
    return [
        ValidationRecord(r.building_id, r.material, r.mean_temp, field_temps[r.building_id], r.image_id)
        for r in reports
        if r.building_id in field_temps
    ]


def split_readings(readings):
    targets = [r for r in readings if not r.building_id]
    roofs = [r for r in readings if r.building_id]
    return targets, roofs


def field_temperatures(
    readings,
    calibrations: dict[str, InstrumentCalibration],
    materials: MaterialTable,
    device_table: PlanckTable,
    e_device: float = DEVICE_EMISSIVITY,
) -> list[float]:
    def eps(material):
        return materials.get(material, device_table.band)

    return field_kinetic_temps(readings, calibrations, eps, device_table, e_device)


def field_targets(readings, calibrations, materials, device_table, e_device=DEVICE_EMISSIVITY) -> list[FieldTarget]:
    temps = field_temperatures(readings, calibrations, materials, device_table, e_device)
    return [
        FieldTarget(r.target_id or f"T{i + 1}", r.target_material, t, r.location)
        for i, (r, t) in enumerate(zip(readings, temps))
    ]


def roof_field_temps(readings, calibrations, materials, device_table, e_device=DEVICE_EMISSIVITY) -> dict[str, float]:
    """Per-building field temperature (K), averaging repeated readings."""
    temps = field_temperatures(readings, calibrations, materials, device_table, e_device)
    acc: dict[str, list[float]] = defaultdict(list)
    for r, t in zip(readings, temps):
        acc[r.building_id].append(t)
    return {bid: float(np.mean(v)) for bid, v in acc.items()}


def check_materials(footprints: FootprintSet, materials: MaterialTable, band) -> None:
    for b in footprints.buildings:
        if b.material not in materials:
            raise MaterialLookupError(b.material, f"building {b.building_id}")
        materials.get(b.material, band)


# output formatting -----------------------------------------------------------

def _c(t: float) -> str:
    return f"{celsius(t):.5f}"


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    buf.write("# mean/min/max over all masked roof pixels, edge pixels included; temperatures in degC\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["building_id", "material", "image_id", "pixel_count", "mean_C", "min_C", "max_C", "flight_line"])
    for r in reports:
        w.writerow([r.building_id, r.material, r.image_id, r.pixel_count, _c(r.mean_temp), _c(r.min_temp), _c(r.max_temp), r.flight_line])
    return buf.getvalue()


def parse_reports_csv(text: str) -> list[BuildingReport]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        out.append(BuildingReport(
            row["building_id"], row["material"], row["image_id"], int(row["pixel_count"]),
            float(row["mean_C"]) + 273.15, float(row["min_C"]) + 273.15, float(row["max_C"]) + 273.15,
            row.get("flight_line") or "",
        ))
    return out


def validation_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["building_id", "material", "image_id", "predicted_C", "field_C", "error_C"])
    for r in records:
        w.writerow([r.building_id, r.material, r.image_id, _c(r.predicted_temp), _c(r.field_temp), f"{r.predicted_temp - r.field_temp:.5f}"])
    return buf.getvalue()


def overlap_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["building_id", "image_a", "image_b", "temp_a_C", "temp_b_C", "delta_K", "same_flight_line"])
    for r in rows:
        w.writerow([r.building_id, r.image_a, r.image_b, _c(r.temp_a), _c(r.temp_b), f"{r.delta:.5f}", str(r.same_flight_line).lower()])
    return buf.getvalue()


def rmse_summary(errors: dict[str, MaterialError]) -> dict:
    return {m: {"rmse_K": e.rmse, "n": e.n, "mean_error_K": e.mean_error} for m, e in errors.items()}


@dataclass
class RunSummary:
    images: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)

    def add_image(self, image_id, n_valid, elc_invalid, out_of_table):
        self.images[image_id] = {
            "valid_pixels": int(n_valid),
            "elc_nonpositive": int(elc_invalid),
            "out_of_table": int(out_of_table),
        }

    def invalid_fraction(self) -> float:
        total = sum(v["valid_pixels"] for v in self.images.values())
        bad = sum(v["elc_nonpositive"] + v["out_of_table"] for v in self.images.values())
        return bad / total if total else 0.0

    def to_dict(self) -> dict:
        return {"images": self.images, "model": self.model, "parameters": self.parameters,
                "invalid_fraction": self.invalid_fraction()}


def nan_to_none(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


@dataclass
class ProcessResult:
    pairs: list
    first_fit: tuple
    pruned: object
    model: ELCModel
    ground: list[RadianceRaster]
    rooftops: list[RooftopResult]
    validation: list[ValidationRecord]
    summary: RunSummary

    @property
    def reports(self) -> list[BuildingReport]:
        return [r for res in self.rooftops for r in res.reports]


def process(
    rasters: list[RadianceRaster],
    footprints: FootprintSet,
    readings,
    materials: MaterialTable,
    image_table: PlanckTable,
    device_table: PlanckTable,
    calibrations: dict[str, InstrumentCalibration] | None = None,
    window: int = 3,
    cooks_rule="4/n",
    e_device: float = DEVICE_EMISSIVITY,
) -> ProcessResult:
    """Field readings and at-sensor rasters to validated rooftop temperatures."""
    from .elc import filter_impervious, fit_elc, prepare_pairs, prune_and_refit
    from .raster import rasterize

    calibrations = calibrations or {}
    check_materials(footprints, materials, image_table.band)
    target_readings, roof_readings = split_readings(readings)
    targets = field_targets(target_readings, calibrations, materials, device_table, e_device)
    pairs = prepare_pairs(targets, materials, rasters, image_table, window)
    fit_pairs = filter_impervious(pairs)
    first = fit_elc(fit_pairs, image_table.band)
    pruned = prune_and_refit(fit_pairs, first[1], cooks_rule, image_table.band)
    model = pruned.model

    summary = RunSummary(model=model.to_dict(), parameters={
        "window": window, "cooks_rule": str(cooks_rule), "band": image_table.band.label(),
        "t_min": image_table.t_min, "t_max": image_table.t_max, "t_step": image_table.t_step,
        "lambda_step": image_table.lambda_step, "removed_ids": list(pruned.removed_ids),
        "r_squared_before": pruned.r_squared_before, "r_squared_after": pruned.r_squared_after,
    })
    grounds, rooftops = [], []
    for raster in rasters:
        ground, n_neg = correct_raster(raster, model)
        mask = rasterize(footprints, ground)
        res = rooftop_temperatures(ground, mask, footprints, materials, image_table)
        summary.add_image(raster.image_id, np.count_nonzero(raster.valid), n_neg, res.out_of_table)
        grounds.append(ground)
        rooftops.append(res)
    field = roof_field_temps(roof_readings, calibrations, materials, device_table, e_device)
    reports = [r for res in rooftops for r in res.reports]
    return ProcessResult(pairs, first, pruned, model, grounds, rooftops, validation_records(reports, field), summary)
