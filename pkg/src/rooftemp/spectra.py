"""Spectral reflectance curves and Planck-weighted band emissivity."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import CoverageError, DomainError, MaterialLookupError, ParseError
from .radiometry import (
    DEFAULT_LAMBDA_STEP,
    LWIR_DEVICE,
    LWIR_IMAGER,
    WavelengthBand,
    spectral_exitance,
    trapezoid_weights,
    wavelength_grid,
)

REFLECTANCE = "reflectance"
EMISSIVITY = "emissivity"

T_REF = 300.0

PERVIOUS_MATERIALS = frozenset({"grass", "soil", "tree"})
ROOF_MATERIALS = ("asphalt", "metal", "rubber", "tar")

_HEADER_LINE = re.compile(r"^[A-Za-z][A-Za-z0-9 _()/.-]*:")


@dataclass(frozen=True)
class SpectralCurve:
    wavelengths: np.ndarray
    values: np.ndarray
    kind: str
    material_name: str

    def __post_init__(self):
        if self.kind not in (REFLECTANCE, EMISSIVITY):
            raise DomainError(f"unknown curve kind {self.kind!r}")
        if self.wavelengths.size < 2 or self.wavelengths.shape != self.values.shape:
            raise DomainError("a curve needs at least two samples")
        if np.any(np.diff(self.wavelengths) <= 0):
            raise DomainError("wavelengths must be strictly increasing")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise DomainError(f"{self.material_name}: values must lie in [0, 1]")
        self.wavelengths.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.wavelengths.tolist(), self.values.tolist()))

    def covers(self, band: WavelengthBand) -> bool:
        return self.wavelengths[0] <= band.lambda_lo and self.wavelengths[-1] >= band.lambda_hi


def parse_spectral_curve(text: str, material_name: str, source: str | None = None) -> SpectralCurve:
    """Parse a two-column (wavelength um, reflectance) text file.

    Columns may be separated by whitespace or commas; ``#`` starts a comment.
    ``Key: value`` lines before the first data row are skipped so spectral
    library files with a descriptive header load unchanged. Reflectances
    whose maximum exceeds 1.5 are taken to be percentages.
    """
    rows: list[tuple[float, float, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not rows and _HEADER_LINE.match(line):
            continue
        fields = [f for f in re.split(r"[,\s]+", line) if f]
        if len(fields) < 2:
            raise ParseError(f"expected two columns, got {raw!r}", lineno, source)
        try:
            lam, val = float(fields[0]), float(fields[1])
        except ValueError:
            raise ParseError(f"non-numeric field in {raw!r}", lineno, source) from None
        rows.append((lam, val, lineno))
    if len(rows) < 2:
        raise ParseError(f"need at least 2 data rows, found {len(rows)}", None, source)
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0]:
            raise ParseError(f"duplicate wavelength {b[0]}", b[2], source)
    lam = np.array([r[0] for r in rows])
    val = np.array([r[1] for r in rows])
    if val.max() > 1.5:
        val = val / 100.0
    if np.any(val < 0) or np.any(val > 1):
        bad = next(r for r, v in zip(rows, val) if not 0 <= v <= 1)
        raise ParseError(f"reflectance {bad[1]} outside [0, 1] after normalization", bad[2], source)
    return SpectralCurve(lam, val, REFLECTANCE, material_name)


def read_spectral_curve(path, material_name: str | None = None) -> SpectralCurve:
    path = Path(path)
    return parse_spectral_curve(path.read_text(errors="replace"), material_name or path.stem, str(path))


def emissivity_curve(curve: SpectralCurve) -> SpectralCurve:
    """Kirchhoff's law for opaque surfaces: emissivity = 1 - reflectance."""
    if curve.kind != REFLECTANCE:
        raise DomainError(f"{curve.material_name}: expected a reflectance curve, got {curve.kind}")
    return SpectralCurve(curve.wavelengths.copy(), 1.0 - curve.values, EMISSIVITY, curve.material_name)


def band_emissivity(
    curve: SpectralCurve,
    band: WavelengthBand,
    t_ref: float = T_REF,
    lambda_step: float = DEFAULT_LAMBDA_STEP,
) -> float:
    """Planck-weighted mean emissivity over ``band`` at ``t_ref``."""
    if curve.kind != EMISSIVITY:
        raise DomainError(f"{curve.material_name}: expected an emissivity curve")
    if not curve.covers(band):
        lo, hi = curve.wavelengths[0], curve.wavelengths[-1]
        gaps = []
        if lo > band.lambda_lo:
            gaps.append(f"{band.lambda_lo:g}-{lo:g} um")
        if hi < band.lambda_hi:
            gaps.append(f"{hi:g}-{band.lambda_hi:g} um")
        raise CoverageError(f"{curve.material_name}: curve does not cover {', '.join(gaps)}")
    grid = wavelength_grid(band, lambda_step)
    weight = spectral_exitance(grid, t_ref) * trapezoid_weights(grid)
    eps = np.interp(grid, curve.wavelengths, curve.values)
    return float(np.dot(eps, weight) / weight.sum())


class MaterialTable:
    """Band emissivity per (material, band)."""

    def __init__(self, rows: dict[str, dict[WavelengthBand, float]] | None = None):
        self.rows: dict[str, dict[WavelengthBand, float]] = {}
        for name, per_band in (rows or {}).items():
            for band, eps in per_band.items():
                self.set(name, band, eps)

    def set(self, material: str, band: WavelengthBand, emissivity: float) -> None:
        if not 0 < emissivity <= 1:
            raise DomainError(f"{material}: emissivity {emissivity} outside (0, 1]")
        self.rows.setdefault(material, {})[band] = float(emissivity)

    def get(self, material: str, band: WavelengthBand) -> float:
        try:
            return self.rows[material][band]
        except KeyError:
            raise MaterialLookupError(material, f"band {band.label()} um") from None

    def __contains__(self, material) -> bool:
        return material in self.rows

    def __len__(self) -> int:
        return len(self.rows)

    def materials(self) -> list[str]:
        return list(self.rows)

    def merged(self, other: "MaterialTable") -> "MaterialTable":
        out = MaterialTable(self.rows)
        for name, per_band in other.rows.items():
            for band, eps in per_band.items():
                out.set(name, band, eps)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["material", "band_lo", "band_hi", "emissivity"])
        for name, per_band in self.rows.items():
            for band in sorted(per_band):
                w.writerow([name, f"{band.lambda_lo:g}", f"{band.lambda_hi:g}", repr(per_band[band])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MaterialTable":
        table = cls()
        for i, row in enumerate(csv.DictReader(io.StringIO(text)), start=2):
            try:
                band = WavelengthBand(float(row["band_lo"]), float(row["band_hi"]))
                table.set(row["material"].strip(), band, float(row["emissivity"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"bad material row: {exc}", i) from None
        return table


def material_table(
    curves: Iterable[SpectralCurve],
    bands: Iterable[WavelengthBand],
    t_ref: float = T_REF,
    lambda_step: float = DEFAULT_LAMBDA_STEP,
) -> MaterialTable:
    bands = list(bands)
    table = MaterialTable()
    for curve in curves:
        for band in bands:
            try:
                eps = band_emissivity(curve, band, t_ref, lambda_step)
            except CoverageError as exc:
                raise CoverageError(f"material {curve.material_name!r}: {exc}") from None
            table.set(curve.material_name, band, eps)
    return table


def reference_table() -> MaterialTable:
    """Published band emissivities of common urban materials at 300 K.

    Covers the 8-9.2 um imager band and the 8-14 um thermometer band.
    """
    text = resources.files(__package__).joinpath("data", "reference_emissivity.csv").read_text()
    return MaterialTable.from_csv(text)


def bundled_spectrum(name: str) -> SpectralCurve:
    """One of the small synthetic reflectance spectra shipped for testing."""
    res = resources.files(__package__).joinpath("data", "spectra", f"{name}.txt")
    return parse_spectral_curve(res.read_text(), name, f"bundled:{name}")


def is_pervious(material: str) -> bool:
    return material in PERVIOUS_MATERIALS


BANDS = (LWIR_IMAGER, LWIR_DEVICE)
