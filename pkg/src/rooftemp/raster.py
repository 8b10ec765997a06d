"""Rasters, footprints and the mapping between them.

Grids follow the ESRI ASCII convention: ``origin`` is the lower-left corner
of the lower-left cell and row 0 of ``values`` is the top (northernmost) row.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import GeometryError, NodataError, OutOfExtentError, ParseError
from .radiometry import LWIR_IMAGER, WavelengthBand

DEFAULT_NODATA = -9999.0
_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True)
class RadianceRaster:
    values: np.ndarray = field(repr=False)  # (nrows, ncols); nodata cells hold ``nodata``
    origin: tuple[float, float]
    cellsize: float
    nodata: float = DEFAULT_NODATA
    band: WavelengthBand = LWIR_IMAGER
    image_id: str = ""
    flight_line: str = ""
    units: str = "W m-2"

    def __post_init__(self):
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError("raster values must be a non-empty 2-D grid")
        if not self.cellsize > 0:
            raise ValueError("cellsize must be positive")

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return (self.values != self.nodata) & np.isfinite(self.values)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return x0, y0, x0 + self.ncols * self.cellsize, y0 + self.nrows * self.cellsize

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.extent
        return x0 <= x < x1 and y0 <= y < y1

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing a map point; left/bottom edges inclusive."""
        if not self.contains(x, y):
            raise OutOfExtentError(f"point ({x}, {y}) outside raster extent {self.extent}")
        x0, y0 = self.origin
        col = int(math.floor((x - x0) / self.cellsize))
        row = self.nrows - 1 - int(math.floor((y - y0) / self.cellsize))
        return min(max(row, 0), self.nrows - 1), min(col, self.ncols - 1)

    def cell_center(self, row, col):
        x0, y0 = self.origin
        x = x0 + (np.asarray(col) + 0.5) * self.cellsize
        y = y0 + (self.nrows - np.asarray(row) - 0.5) * self.cellsize
        return x, y

    def with_values(self, values: np.ndarray, **kw) -> "RadianceRaster":
        return replace(self, values=values, **kw)

    def masked(self) -> np.ndarray:
        """Values with nodata replaced by NaN."""
        return np.where(self.valid, self.values, np.nan)

    def sidecar(self) -> dict:
        return {
            "band_lo_um": self.band.lambda_lo,
            "band_hi_um": self.band.lambda_hi,
            "image_id": self.image_id,
            "flight_line": self.flight_line,
            "units": self.units,
        }


def _fmt(v: float, digits: int) -> str:
    return f"{v:.{digits}g}"


def read_ascii_grid(text: str, source: str | None = None, **meta) -> RadianceRaster:
    """Parse an ESRI ASCII grid. Header keys are case-insensitive."""
    tokens = text.split()
    header: dict[str, float] = {}
    pos = 0
    while pos + 1 < len(tokens) and re.match(r"^[A-Za-z_]+$", tokens[pos]):
        key = tokens[pos].lower()
        try:
            header[key] = float(tokens[pos + 1])
        except ValueError:
            raise ParseError(f"bad header value for {tokens[pos]!r}: {tokens[pos + 1]!r}", None, source) from None
        pos += 2
    if "xllcenter" in header and "xllcorner" not in header:
        header["xllcorner"] = header["xllcenter"] - header.get("cellsize", 0) / 2
        header["yllcorner"] = header["yllcenter"] - header.get("cellsize", 0) / 2
    header.setdefault("nodata_value", DEFAULT_NODATA)
    for key in _HEADER_KEYS:
        if key not in header:
            raise ParseError(f"missing header key {key!r}", None, source)
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    body = tokens[pos:]
    if len(body) != ncols * nrows:
        raise ParseError(
            f"expected {nrows}x{ncols}={nrows * ncols} cells after header token {pos}, found {len(body)}", None, source
        )
    try:
        values = np.array(body, dtype=float).reshape(nrows, ncols)
    except ValueError as exc:
        raise ParseError(f"non-numeric cell value: {exc}", None, source) from None
    return RadianceRaster(
        values=values,
        origin=(header["xllcorner"], header["yllcorner"]),
        cellsize=header["cellsize"],
        nodata=header["nodata_value"],
        **meta,
    )


def write_ascii_grid(raster: RadianceRaster, digits: int = 6) -> str:
    lines = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xllcorner {raster.origin[0]!r}",
        f"yllcorner {raster.origin[1]!r}",
        f"cellsize {raster.cellsize!r}",
        f"NODATA_value {_fmt(raster.nodata, 17)}",
    ]
    nd = _fmt(raster.nodata, 17)
    valid = raster.valid
    for row, ok in zip(raster.values, valid):
        lines.append(" ".join(_fmt(v, digits) if k else nd for v, k in zip(row.tolist(), ok.tolist())))
    return "\n".join(lines) + "\n"


def _meta_from_sidecar(meta: dict) -> dict:
    out = {}
    if "band_lo_um" in meta:
        out["band"] = WavelengthBand(meta["band_lo_um"], meta["band_hi_um"])
    for key in ("image_id", "flight_line", "units"):
        if key in meta:
            out[key] = str(meta[key])
    return out


def load_raster(path) -> RadianceRaster:
    """Load ``.asc`` or ``.f64`` raster plus its optional JSON sidecar.

    A sidecar carrying ``dn_scale``/``dn_offset`` converts sensor units to
    exitance (value * dn_scale + dn_offset) on valid cells.
    """
    path = Path(path)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    kw = _meta_from_sidecar(meta)
    kw.setdefault("image_id", path.stem)
    if path.suffix == ".f64":
        hdr = meta
        for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
            if key not in hdr:
                raise ParseError(f"binary raster header lacks {key!r}", None, str(side))
        data = np.fromfile(path, dtype="<f8")
        if data.size != hdr["ncols"] * hdr["nrows"]:
            raise ParseError("binary raster size does not match header", None, str(path))
        raster = RadianceRaster(
            data.reshape(hdr["nrows"], hdr["ncols"]), (hdr["xllcorner"], hdr["yllcorner"]),
            hdr["cellsize"], hdr.get("nodata_value", DEFAULT_NODATA), **kw,
        )
    else:
        raster = read_ascii_grid(path.read_text(), str(path), **kw)
    scale, offset = meta.get("dn_scale"), meta.get("dn_offset")
    if scale is not None or offset is not None:
        scale = 1.0 if scale is None else float(scale)
        offset = 0.0 if offset is None else float(offset)
        vals = np.where(raster.valid, raster.values * scale + offset, raster.nodata)
        raster = raster.with_values(vals)
    return raster


def save_raster(raster: RadianceRaster, path, digits: int = 6) -> None:
    path = Path(path)
    meta = raster.sidecar()
    if path.suffix == ".f64":
        raster.values.astype("<f8").tofile(path)
        meta.update(
            ncols=raster.ncols, nrows=raster.nrows, xllcorner=raster.origin[0],
            yllcorner=raster.origin[1], cellsize=raster.cellsize, nodata_value=raster.nodata,
        )
    else:
        path.write_text(write_ascii_grid(raster, digits))
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def sample(raster: RadianceRaster, x: float, y: float, window: int = 1) -> float:
    """Cell value at a map point, or the nodata-ignoring mean of a window around it."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    row, col = raster.cell_of(x, y)
    h = window // 2
    r0, r1 = max(0, row - h), min(raster.nrows, row + h + 1)
    c0, c1 = max(0, col - h), min(raster.ncols, col + h + 1)
    block = raster.values[r0:r1, c0:c1]
    ok = raster.valid[r0:r1, c0:c1]
    if not ok.any():
        raise NodataError(f"no valid cells in {window}x{window} window at ({x}, {y})")
    return float(block[ok].mean())


# footprints ------------------------------------------------------------------

@dataclass(frozen=True)
class Building:
    building_id: str
    material: str
    rings: tuple[tuple[tuple[float, float], ...], ...]

    def __post_init__(self):
        for ring in self.rings:
            if len(_open_ring(ring)) < 3:
                raise GeometryError(f"building {self.building_id}: ring with fewer than 3 vertices")


@dataclass(frozen=True)
class FootprintSet:
    buildings: tuple[Building, ...]

    def by_id(self) -> dict[str, Building]:
        return {b.building_id: b for b in self.buildings}

    def __len__(self):
        return len(self.buildings)


def _open_ring(ring):
    pts = [tuple(map(float, p[:2])) for p in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return pts


def parse_footprints(text: str, source=None, materials=None) -> FootprintSet:
    """GeoJSON FeatureCollection of Polygon/MultiPolygon with building_id and material."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", exc.lineno, source) from None
    out = []
    for i, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        geom = feat.get("geometry") or {}
        if "building_id" not in props or "material" not in props:
            raise ParseError(f"feature {i} lacks building_id/material", None, source)
        if geom.get("type") == "Polygon":
            polys = [geom["coordinates"]]
        elif geom.get("type") == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise GeometryError(f"feature {i}: unsupported geometry {geom.get('type')!r}")
        rings = tuple(tuple(tuple(p) for p in _open_ring(r)) for poly in polys for r in poly)
        material = str(props["material"])
        if materials is not None and material not in materials:
            raise GeometryError(f"building {props['building_id']}: unsupported material {material!r}")
        out.append(Building(str(props["building_id"]), material, rings))
    return FootprintSet(tuple(out))


def footprints_to_geojson(fp: FootprintSet) -> str:
    feats = []
    for b in fp.buildings:
        rings = [[list(p) for p in r] + [list(r[0])] for r in b.rings]
        feats.append({
            "type": "Feature",
            "properties": {"building_id": b.building_id, "material": b.material},
            "geometry": {"type": "Polygon", "coordinates": rings} if len(rings) == 1
            else {"type": "MultiPolygon", "coordinates": [[r] for r in rings]},
        })
    return json.dumps({"type": "FeatureCollection", "features": feats}, indent=1, sort_keys=True) + "\n"


def points_in_rings(px: np.ndarray, py: np.ndarray, rings) -> np.ndarray:
    """Even-odd point-in-polygon over all rings.

    Points on left/bottom edges count as inside, right/top edges as outside.
    """
    inside = np.zeros(px.shape, dtype=bool)
    for ring in rings:
        pts = _open_ring(ring)
        n = len(pts)
        for i in range(n):
            xi, yi = pts[i]
            xj, yj = pts[i - 1]
            if yi == yj:
                continue
            crosses = (yi > py) != (yj > py)
            x_int = xi + (py - yi) * (xj - xi) / (yj - yi)
            inside ^= crosses & (px < x_int)
    return inside


def _id_key(bid: str):
    try:
        return (0, float(bid), bid)
    except ValueError:
        return (1, 0.0, bid)


@dataclass(frozen=True)
class BuildingMask:
    """Per-cell index into ``ids`` (-1 for no building), aligned with a raster."""

    index: np.ndarray
    ids: tuple[str, ...]

    def cells_of(self, building_id: str) -> np.ndarray:
        return self.index == self.ids.index(building_id)

    def building_ids(self) -> np.ndarray:
        lut = np.array(list(self.ids) + [""], dtype=object)
        return lut[self.index]


def rasterize(footprints: FootprintSet, template: RadianceRaster) -> BuildingMask:
    """Cells whose centers fall inside each footprint; overlaps go to the lowest building_id."""
    index = np.full((template.nrows, template.ncols), -1, dtype=np.int64)
    ids = tuple(b.building_id for b in footprints.buildings)
    x0, y0, _, _ = template.extent
    cs = template.cellsize
    order = sorted(range(len(ids)), key=lambda i: _id_key(ids[i]), reverse=True)
    for i in order:
        b = footprints.buildings[i]
        xs = [p[0] for r in b.rings for p in r]
        ys = [p[1] for r in b.rings for p in r]
        c0 = max(0, int(math.floor((min(xs) - x0) / cs - 0.5)))
        c1 = min(template.ncols, int(math.ceil((max(xs) - x0) / cs - 0.5)) + 1)
        r0 = max(0, int(math.floor(template.nrows - 0.5 - (max(ys) - y0) / cs)))
        r1 = min(template.nrows, int(math.ceil(template.nrows - 0.5 - (min(ys) - y0) / cs)) + 1)
        if c0 >= c1 or r0 >= r1:
            continue
        rr, cc = np.mgrid[r0:r1, c0:c1]
        px, py = template.cell_center(rr, cc)
        hit = points_in_rings(px, py, b.rings)
        sub = index[r0:r1, c0:c1]
        sub[hit] = i
    return BuildingMask(index, ids)
