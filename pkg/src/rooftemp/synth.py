"""Forward simulator: known temperature and emissivity fields to at-sensor imagery and field readings.

Band exitance here is computed by composite Gauss-Legendre quadrature, a
route independent of the trapezoid tables the pipeline inverts with.

Noise comes from numpy's Philox4x32 counter-based generator keyed by
``(seed, image index)``; draws are taken in row-major pixel order, so a given
seed always produces the same field regardless of how the work is split.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, GeometryError
from .instrument import DEVICE_EMISSIVITY, WATER_EMISSIVITY, ThermometerReading, kinetic_to_radiant
from .radiometry import LWIR_IMAGER, PlanckTable, WavelengthBand, spectral_exitance
from .raster import Building, FootprintSet, RadianceRaster, rasterize
from .spectra import MaterialTable

NODATA = -9999.0


@lru_cache(maxsize=16)
def _gl_nodes(lo: float, hi: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def band_exitance_gl(band: WavelengthBand, temperature, panels: int = 8, order: int = 16):
    """Band exitance by composite Gauss-Legendre quadrature (W m^-2)."""
    nodes, weights = _gl_nodes(band.lambda_lo, band.lambda_hi, panels, order)
    t = np.asarray(temperature, dtype=float)
    flat = t.reshape(-1)
    out = np.empty(flat.shape)
    step = 1 << 15
    for i in range(0, flat.size, step):
        out[i:i + step] = spectral_exitance(nodes[None, :], flat[i:i + step, None]) @ weights
    out = out.reshape(t.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Atmosphere:
    gain_atm: float = 1.0
    offset_atm: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.gain_atm > 0 or self.noise_sigma < 0:
            raise ConfigError("atmosphere needs gain_atm > 0 and noise_sigma >= 0")


def noise_field(seed: int, stream: int, shape) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(stream)]))
    return gen.standard_normal(size=shape)


def ground_leaving(temp, emissivity, band, background_temp=None):
    """Emitted plus (optionally) reflected background exitance."""
    g = emissivity * band_exitance_gl(band, temp)
    if background_temp is not None:
        bg = np.asarray(background_temp, dtype=float)
        has = np.isfinite(bg)
        refl = np.zeros(np.shape(g))
        refl[has] = band_exitance_gl(band, bg[has])
        g = g + (1.0 - emissivity) * refl
    return g


def simulate_at_sensor(
    temp_raster: RadianceRaster,
    emissivity_raster: RadianceRaster,
    atmosphere: Atmosphere,
    band: WavelengthBand | None = None,
    table: PlanckTable | None = None,
    background_temp: RadianceRaster | None = None,
    stream: int = 0,
) -> RadianceRaster:
    band = band or temp_raster.band
    if temp_raster.values.shape != emissivity_raster.values.shape or temp_raster.origin != emissivity_raster.origin:
        raise ConfigError("temperature and emissivity rasters are not aligned")
    if background_temp is not None and background_temp.values.shape != temp_raster.values.shape:
        raise ConfigError("background temperature raster is not aligned")
    ok = temp_raster.valid & emissivity_raster.valid
    t = temp_raster.values[ok]
    if table is not None and t.size and (t.min() < table.t_min or t.max() > table.t_max):
        raise ConfigError("scene temperatures fall outside the Planck table range")
    bg = background_temp.values[ok] if background_temp is not None else None  # NaN: no reflected term
    ground = ground_leaving(t, emissivity_raster.values[ok], band, bg)
    sensor = atmosphere.gain_atm * ground + atmosphere.offset_atm
    if atmosphere.noise_sigma > 0:
        noise = noise_field(atmosphere.seed, stream, temp_raster.values.shape)
        sensor = sensor + atmosphere.noise_sigma * noise[ok]
    out = np.full(temp_raster.values.shape, NODATA)
    out[ok] = sensor
    return temp_raster.with_values(out, nodata=NODATA, band=band, units="W m-2")


# scenes ----------------------------------------------------------------------

@dataclass
class SceneSpec:
    nrows: int
    ncols: int
    cellsize: float = 0.3
    origin: tuple[float, float] = (0.0, 0.0)
    band: WavelengthBand = LWIR_IMAGER
    background: dict = field(default_factory=lambda: {
        "temp_K": 271.66, "amplitude_K": 1.5, "period_cells": 160.0, "material": "grass"})
    buildings: list[dict] = field(default_factory=list)  # building_id, material, polygon, temp_K
    targets: list[dict] = field(default_factory=list)  # target_id, material, x, y, temp_K, size_cells
    instruments: list[dict] = field(default_factory=lambda: [{"instrument_id": "IR1", "slope": 1.0, "offset": 0.0}])
    reading_sigma: float = 0.0
    roof_readings: bool = True
    calibration: dict = field(default_factory=lambda: {
        "control_start_C": 3.0, "control_stop_C": 23.0, "step_C": 0.5, "sigma_K": 0.0})
    atmosphere: dict = field(default_factory=lambda: {"gain": 1.0, "offset": 0.0, "noise_sigma": 0.0, "seed": 0})
    images: list[dict] = field(default_factory=list)  # image_id, flight_line, row0, col0, nrows, ncols, offset_jitter
    reflection: dict = field(default_factory=dict)  # surround_temp_K, sky_temp_K, specular_materials
    device_emissivity: float = DEVICE_EMISSIVITY
    medium_emissivity: float = WATER_EMISSIVITY
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        try:
            if "band" in d:
                lo, hi = d["band"]
                d["band"] = WavelengthBand(float(lo), float(hi))
            if "origin" in d:
                d["origin"] = tuple(d["origin"])
            spec = cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scene spec: {exc}") from None
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scene spec is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["band"] = [self.band.lambda_lo, self.band.lambda_hi]
        d["origin"] = list(self.origin)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def validate(self) -> None:
        if self.nrows < 1 or self.ncols < 1 or not self.cellsize > 0:
            raise ConfigError("scene needs positive dimensions and cellsize")
        for key in ("temp_K", "material"):
            if key not in self.background:
                raise ConfigError(f"background lacks {key!r}")
        for b in self.buildings:
            for key in ("building_id", "material", "polygon", "temp_K"):
                if key not in b:
                    raise ConfigError(f"building entry lacks {key!r}")
        for t in self.targets:
            for key in ("target_id", "material", "x", "y", "temp_K"):
                if key not in t:
                    raise ConfigError(f"target entry lacks {key!r}")

    @property
    def extent(self):
        x0, y0 = self.origin
        return x0, y0, x0 + self.ncols * self.cellsize, y0 + self.nrows * self.cellsize


@dataclass
class Scene:
    temperature: RadianceRaster
    emissivity: RadianceRaster
    footprints: FootprintSet
    readings: list[ThermometerReading]
    calibration_readings: list[ThermometerReading]
    background_temp: RadianceRaster | None = None


def _template(spec: SceneSpec, values) -> RadianceRaster:
    return RadianceRaster(values, spec.origin, spec.cellsize, NODATA, spec.band, "scene", "", "K")


def generate_scene(spec: SceneSpec, materials: MaterialTable, device_table: PlanckTable) -> Scene:
    """Rasterize buildings and targets onto a background field and synthesize field readings."""
    spec.validate()
    x0, y0, x1, y1 = spec.extent
    band = spec.band
    rr, cc = np.mgrid[0:spec.nrows, 0:spec.ncols]
    bgd = spec.background
    period = float(bgd.get("period_cells", 160.0))
    amp = float(bgd.get("amplitude_K", 0.0))
    temp = bgd["temp_K"] + amp * np.sin(2 * np.pi * cc / period) * np.cos(2 * np.pi * rr / (1.3 * period))
    eps = np.full(temp.shape, materials.get(bgd["material"], band))
    material_grid = np.full(temp.shape, bgd["material"], dtype=object)

    buildings = []
    for b in spec.buildings:
        poly = [tuple(map(float, p)) for p in b["polygon"]]
        xs, ys = [p[0] for p in poly], [p[1] for p in poly]
        if min(xs) < x0 or max(xs) > x1 or min(ys) < y0 or max(ys) > y1:
            raise GeometryError(f"building {b['building_id']} extends outside the scene grid")
        buildings.append(Building(str(b["building_id"]), b["material"], (tuple(poly),)))
    footprints = FootprintSet(tuple(buildings))
    template = _template(spec, temp)
    mask = rasterize(footprints, template)
    for i, b in enumerate(spec.buildings):
        cells = mask.index == i
        temp[cells] = float(b["temp_K"])
        eps[cells] = materials.get(b["material"], band)
        material_grid[cells] = b["material"]

    for t in spec.targets:
        size = int(t.get("size_cells", 5))
        probe = template
        if not probe.contains(t["x"], t["y"]):
            raise GeometryError(f"target {t['target_id']} lies outside the scene grid")
        row, col = probe.cell_of(t["x"], t["y"])
        h = size // 2
        sl = (slice(max(0, row - h), row + h + 1), slice(max(0, col - h), col + h + 1))
        temp[sl] = float(t["temp_K"])
        eps[sl] = materials.get(t["material"], band)
        material_grid[sl] = t["material"]

    temp_r = _template(spec, temp)
    eps_r = temp_r.with_values(eps, units="1")

    background = None
    refl = spec.reflection or {}
    if refl.get("surround_temp_K") is not None or refl.get("sky_temp_K") is not None:
        surround = refl.get("surround_temp_K")
        sky = refl.get("sky_temp_K", surround)
        bg = np.full(temp.shape, np.nan if surround is None else float(surround))
        specular = np.isin(material_grid, list(refl.get("specular_materials", [])))
        if sky is not None:
            bg[specular] = float(sky)
        background = temp_r.with_values(bg)

    readings = _field_readings(spec, materials, device_table, mask, footprints, template)
    calib = _calibration_readings(spec, device_table)
    return Scene(temp_r, eps_r, footprints, readings, calib, background)


def _instrument_cycle(spec):
    if not spec.instruments:
        raise ConfigError("scene needs at least one instrument")
    return spec.instruments


def _display(kinetic_norm, inst, e_target, spec, table):
    kin = (kinetic_norm - inst.get("offset", 0.0)) / inst.get("slope", 1.0)
    return kinetic_to_radiant(kin, spec.device_emissivity, e_target, table)


def _field_readings(spec, materials, table, mask, footprints, template):
    insts = _instrument_cycle(spec)
    gen = np.random.Generator(np.random.Philox(key=[spec.seed, 1 << 20]))
    out = []
    k = 0

    def jitter():
        return spec.reading_sigma * gen.standard_normal() if spec.reading_sigma > 0 else 0.0

    for t in spec.targets:
        inst = insts[k % len(insts)]
        k += 1
        e_t = materials.get(t["material"], table.band)
        shown = _display(float(t["temp_K"]) + jitter(), inst, e_t, spec, table)
        out.append(ThermometerReading(inst["instrument_id"], shown, t["material"], (float(t["x"]), float(t["y"])),
                                      float(k), None, str(t["target_id"])))
    if spec.roof_readings:
        for i, b in enumerate(spec.buildings):
            cells = np.argwhere(mask.index == i)
            if cells.size == 0:
                continue
            r, c = cells[len(cells) // 2]
            x, y = template.cell_center(r, c)
            inst = insts[k % len(insts)]
            k += 1
            e_t = materials.get(b["material"], table.band)
            shown = _display(float(b["temp_K"]) + jitter(), inst, e_t, spec, table)
            out.append(ThermometerReading(inst["instrument_id"], shown, b["material"], (float(x), float(y)),
                                          float(k), None, "", str(b["building_id"])))
    return out


def _calibration_readings(spec, table):
    cfg = spec.calibration
    start, stop, step = cfg.get("control_start_C", 3.0), cfg.get("control_stop_C", 23.0), cfg.get("step_C", 0.5)
    n = int(round((stop - start) / step)) + 1
    controls = 273.15 + start + step * np.arange(n)
    sigma = float(cfg.get("sigma_K", 0.0))
    out = []
    for j, inst in enumerate(_instrument_cycle(spec)):
        gen = np.random.Generator(np.random.Philox(key=[spec.seed, (1 << 21) + j]))
        shown = _display(controls, inst, spec.medium_emissivity, spec, table)
        if sigma > 0:
            shown = shown + sigma * gen.standard_normal(shown.shape)
        for i, (c, s) in enumerate(zip(controls, shown)):
            out.append(ThermometerReading(inst["instrument_id"], float(s), "water", (0.0, 0.0), float(i), float(c)))
    return out


def image_windows(spec: SceneSpec) -> list[dict]:
    if spec.images:
        return spec.images
    return [{"image_id": "img1", "flight_line": "1", "row0": 0, "col0": 0,
             "nrows": spec.nrows, "ncols": spec.ncols, "offset_jitter": 0.0}]


def _crop(r: RadianceRaster, row0, col0, nrows, ncols, **kw) -> RadianceRaster:
    vals = r.values[row0:row0 + nrows, col0:col0 + ncols].copy()
    x0 = r.origin[0] + col0 * r.cellsize
    y0 = r.origin[1] + (r.nrows - row0 - nrows) * r.cellsize
    return RadianceRaster(vals, (x0, y0), r.cellsize, r.nodata, r.band, kw.get("image_id", r.image_id),
                          kw.get("flight_line", r.flight_line), r.units)


def simulate_images(scene: Scene, spec: SceneSpec, table: PlanckTable | None = None) -> list[RadianceRaster]:
    """At-sensor rasters for each image window, each with its own offset jitter and noise stream."""
    a = spec.atmosphere
    out = []
    for k, win in enumerate(image_windows(spec)):
        if win["row0"] < 0 or win["col0"] < 0 or win["row0"] + win["nrows"] > spec.nrows or win["col0"] + win["ncols"] > spec.ncols:
            raise ConfigError(f"image {win['image_id']} window exceeds the scene")
        geo = (win["row0"], win["col0"], win["nrows"], win["ncols"])
        meta = {"image_id": str(win["image_id"]), "flight_line": str(win.get("flight_line", ""))}
        t = _crop(scene.temperature, *geo, **meta)
        e = _crop(scene.emissivity, *geo, **meta)
        bg = _crop(scene.background_temp, *geo, **meta) if scene.background_temp is not None else None
        atm = Atmosphere(a.get("gain", 1.0), a.get("offset", 0.0) + win.get("offset_jitter", 0.0),
                         a.get("noise_sigma", 0.0), a.get("seed", 0))
        out.append(simulate_at_sensor(t, e, atm, spec.band, table, bg, stream=k))
    return out


# random scene layouts ----------------------------------------------------------

TARGET_MATERIALS = ("asphalt", "concrete", "water", "black_board")


def random_scene_spec(
    n_buildings: int = 64,
    n_targets: int = 30,
    nrows: int = 512,
    ncols: int = 512,
    cellsize: float = 0.3,
    seed: int = 0,
    roof_materials=("asphalt", "metal", "rubber", "tar"),
    target_materials=TARGET_MATERIALS,
    pervious_targets: int = 0,
    gain: float = 0.4,
    offset: float = 3.0,
    noise_sigma: float = 0.0,
) -> SceneSpec:
    """Buildings as rotated rectangles on a jittered lattice, targets in the gaps."""
    rng = np.random.Generator(np.random.Philox(key=[seed, 7]))
    side = math.ceil(math.sqrt(n_buildings))
    block_r, block_c = nrows / side, ncols / side
    buildings = []
    for i in range(n_buildings):
        br, bc = divmod(i, side)
        cx = (bc + 0.5) * block_c * cellsize
        cy = (br + 0.5) * block_r * cellsize
        w = rng.uniform(0.35, 0.55) * block_c * cellsize
        h = rng.uniform(0.35, 0.55) * block_r * cellsize
        ang = rng.uniform(-0.4, 0.4)
        ca, sa = math.cos(ang), math.sin(ang)
        poly = []
        for dx, dy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
            poly.append([cx + dx * ca - dy * sa, cy + dx * sa + dy * ca])
        material = roof_materials[i % len(roof_materials)]
        buildings.append({"building_id": str(i + 1), "material": material, "polygon": poly,
                          "temp_K": float(rng.uniform(267.0, 285.0))})
    targets = []
    temp_ranges = {"water": (275.0, 278.0), "black_board": (262.0, 266.0), "asphalt": (266.0, 276.0),
                   "concrete": (266.0, 276.0), "grass": (264.0, 272.0), "soil": (266.0, 272.0)}
    mats = list(target_materials)
    for j in range(n_targets + pervious_targets):
        br, bc = divmod(j % (side * side), side)
        # gap corner of a lattice block, away from the central building
        x = (bc + 0.08 + 0.04 * (j // (side * side))) * block_c * cellsize
        y = (br + 0.08) * block_r * cellsize
        if j < n_targets:
            mat = mats[j % len(mats)]
        else:
            mat = ("grass", "soil")[j % 2]
        lo, hi = temp_ranges.get(mat, (266.0, 276.0))
        targets.append({"target_id": f"T{j + 1}", "material": mat, "x": x, "y": y,
                        "temp_K": float(rng.uniform(lo, hi)), "size_cells": 5})
    return SceneSpec(
        nrows=nrows, ncols=ncols, cellsize=cellsize, buildings=buildings, targets=targets,
        atmosphere={"gain": gain, "offset": offset, "noise_sigma": noise_sigma, "seed": seed}, seed=seed,
    )


def simulate_pairs(
    targets,
    atmosphere: Atmosphere,
    materials: MaterialTable,
    band: WavelengthBand = LWIR_IMAGER,
    sensor_bias: dict | None = None,
    stream: int = 3,
):
    """ELC pairs straight from target truth, without building a raster.

    ``targets`` holds (target_id, material, temperature K) tuples;
    ``sensor_bias`` adds a fixed at-sensor error to chosen targets, e.g. to
    mimic a target sampled from the wrong pixels.
    """
    from .elc import TargetPair
    from .spectra import is_pervious

    sensor_bias = sensor_bias or {}
    temps = np.array([t[2] for t in targets], dtype=float)
    eps = np.array([materials.get(t[1], band) for t in targets])
    ground = eps * band_exitance_gl(band, temps)
    noise = noise_field(atmosphere.seed, stream, (len(targets),)) * atmosphere.noise_sigma
    sensor = atmosphere.gain_atm * ground + atmosphere.offset_atm + noise
    return [
        TargetPair(tid, mat, is_pervious(mat), float(g), float(s + sensor_bias.get(tid, 0.0)))
        for (tid, mat, _), g, s in zip(targets, ground, sensor)
    ]
