"""Planck-law evaluation, band integration and lookup-table inversion.

All exitances are hemispherical radiant exitance: spectral values in
W m^-2 um^-1, band-integrated values in W m^-2. Wavelengths are in
micrometres, temperatures in kelvin.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, OutOfTableError

H_PLANCK = 6.62607015e-34  # J s
C_LIGHT = 2.99792458e8  # m s^-1
K_BOLTZMANN = 1.380649e-23  # J K^-1

# first and second radiation constants, in um-based units
C1 = 2.0 * math.pi * H_PLANCK * C_LIGHT**2 * 1e24  # W m^-2 um^4
C2 = H_PLANCK * C_LIGHT / K_BOLTZMANN * 1e6  # um K

DEFAULT_LAMBDA_STEP = 0.001
DEFAULT_T_MIN = 230.0
DEFAULT_T_MAX = 330.0
DEFAULT_T_STEP = 0.1

_CHUNK = 1 << 22  # max grid cells evaluated at once in band_exitance


@dataclass(frozen=True)
class PhysicalConstants:
    h: float = H_PLANCK
    c: float = C_LIGHT
    k: float = K_BOLTZMANN


@dataclass(frozen=True, order=True)
class WavelengthBand:
    lambda_lo: float
    lambda_hi: float

    def __post_init__(self):
        lo, hi = self.lambda_lo, self.lambda_hi
        if not (math.isfinite(lo) and math.isfinite(hi)) or not 0 < lo < hi:
            raise DomainError(f"invalid wavelength band [{lo}, {hi}] um")

    @property
    def width(self) -> float:
        return self.lambda_hi - self.lambda_lo

    def label(self) -> str:
        return f"{self.lambda_lo:g}-{self.lambda_hi:g}"

    @classmethod
    def parse(cls, text: str) -> "WavelengthBand":
        """Parse ``"8-9.2"`` style labels."""
        try:
            lo, hi = (float(p) for p in text.strip().split("-"))
        except ValueError:
            raise DomainError(f"cannot parse band {text!r}") from None
        return cls(lo, hi)


LWIR_IMAGER = WavelengthBand(8.0, 9.2)
LWIR_DEVICE = WavelengthBand(8.0, 14.0)


def spectral_exitance(wavelength, temperature):
    """Blackbody spectral exitance in W m^-2 um^-1.

    Both arguments broadcast. Raises DomainError for non-positive input.
    """
    lam = np.asarray(wavelength, dtype=float)
    t = np.asarray(temperature, dtype=float)
    if np.any(~(lam > 0)) or np.any(~(t > 0)):
        raise DomainError("wavelength and temperature must be positive")
    with np.errstate(over="ignore"):
        out = C1 / lam**5 / np.expm1(C2 / (lam * t))
    return out[()] if out.ndim == 0 else out


def wavelength_grid(band: WavelengthBand, lambda_step: float = DEFAULT_LAMBDA_STEP) -> np.ndarray:
    """Uniform grid over the band, both endpoints included, spacing <= lambda_step."""
    if not (lambda_step > 0) or lambda_step > band.width * (1 + 1e-12):
        raise DomainError(f"lambda_step {lambda_step} invalid for band {band.label()}")
    n_int = math.ceil(round(band.width / lambda_step, 9))
    return np.linspace(band.lambda_lo, band.lambda_hi, n_int + 1)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    dx = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def band_exitance(band: WavelengthBand, temperature, lambda_step: float = DEFAULT_LAMBDA_STEP):
    """Trapezoid-rule integral of spectral exitance over ``band``.

    ``temperature`` may be a scalar or an array; the result has the same shape.
    """
    grid = wavelength_grid(band, lambda_step)
    w = trapezoid_weights(grid)
    t = np.asarray(temperature, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("temperature must be positive")
    flat = t.reshape(-1)
    out = np.empty(flat.shape)
    rows = max(1, _CHUNK // grid.size)
    for i in range(0, flat.size, rows):
        chunk = flat[i:i + rows, None]
        out[i:i + rows] = spectral_exitance(grid[None, :], chunk) @ w
    out = out.reshape(t.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PlanckTable:
    """Monotone band-exitance <-> temperature lookup for one band."""

    band: WavelengthBand
    t_min: float
    t_max: float
    t_step: float
    lambda_step: float
    temperatures: np.ndarray = field(repr=False, compare=False)
    exitances: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.temperatures, self.exitances):
            arr.setflags(write=False)
        if self.temperatures.shape != self.exitances.shape or self.temperatures.size < 2:
            raise DomainError("table needs at least two matching entries")
        if np.any(np.diff(self.temperatures) <= 0) or np.any(np.diff(self.exitances) <= 0):
            raise DomainError("table entries must be strictly increasing")

    @property
    def entries(self) -> list[tuple[float, float]]:
        return list(zip(self.temperatures.tolist(), self.exitances.tolist()))

    @property
    def exitance_range(self) -> tuple[float, float]:
        return float(self.exitances[0]), float(self.exitances[-1])

    def forward(self, temperature):
        """Piecewise-linear table exitance at ``temperature``; exact inverse of inversion."""
        t = np.asarray(temperature, dtype=float)
        if np.any(t < self.temperatures[0]) or np.any(t > self.temperatures[-1]):
            raise DomainError("temperature outside table range")
        out = np.interp(t, self.temperatures, self.exitances)
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path) -> None:
        """Write ``path`` (two columns) and a ``.json`` sidecar next to it."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["temperature_K", "exitance_Wm2"])
            for t, m in self.entries:
                w.writerow([repr(t), repr(m)])
        meta = {
            "band_lo_um": self.band.lambda_lo,
            "band_hi_um": self.band.lambda_hi,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "t_step": self.t_step,
            "lambda_step": self.lambda_step,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path) -> "PlanckTable":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        temps, exits = [], []
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                temps.append(float(row["temperature_K"]))
                exits.append(float(row["exitance_Wm2"]))
        return cls(
            band=WavelengthBand(meta["band_lo_um"], meta["band_hi_um"]),
            t_min=meta["t_min"],
            t_max=meta["t_max"],
            t_step=meta["t_step"],
            lambda_step=meta["lambda_step"],
            temperatures=np.array(temps),
            exitances=np.array(exits),
        )


def build_planck_table(
    band: WavelengthBand,
    t_min: float = DEFAULT_T_MIN,
    t_max: float = DEFAULT_T_MAX,
    t_step: float = DEFAULT_T_STEP,
    lambda_step: float = DEFAULT_LAMBDA_STEP,
) -> PlanckTable:
    if not (0 < t_min < t_max) or not (t_step > 0):
        raise DomainError(f"degenerate table range [{t_min}, {t_max}] step {t_step}")
    n_steps = (t_max - t_min) / t_step
    if abs(n_steps - round(n_steps)) > 1e-6:
        raise DomainError("t_step must divide the temperature range evenly")
    n = int(round(n_steps)) + 1
    temps = t_min + t_step * np.arange(n)
    temps[-1] = t_max
    exits = band_exitance(band, temps, lambda_step)
    return PlanckTable(band, float(t_min), float(t_max), float(t_step), float(lambda_step), temps, exits)


def invert_band_exitance(table: PlanckTable, exitance, out_of_range: str = "raise"):
    """Temperature for a band exitance by binary search and linear interpolation.

    Values outside the table raise OutOfTableError, or become NaN when
    ``out_of_range="nan"``. No extrapolation is ever performed.
    """
    m = np.asarray(exitance, dtype=float)
    xs, ts = table.exitances, table.temperatures
    bad = ~((m >= xs[0]) & (m <= xs[-1]))
    if np.any(bad) and out_of_range == "raise":
        first = m[bad].flat[0] if m.ndim else float(m)
        raise OutOfTableError(float(first), float(xs[0]), float(xs[-1]))
    mc = np.clip(np.where(bad, xs[0], m), xs[0], xs[-1])
    hi = np.clip(np.searchsorted(xs, mc, side="left"), 1, xs.size - 1)
    lo = hi - 1
    frac = (mc - xs[lo]) / (xs[hi] - xs[lo])
    out = ts[lo] + frac * (ts[hi] - ts[lo])
    out = np.where(bad, np.nan, out)
    return float(out) if out.ndim == 0 else out


def rescale_exitance(exitance, e_from, e_to):
    """Re-express an exitance associated with emissivity ``e_from`` at ``e_to``."""
    for e in (e_from, e_to):
        if not 0 < e <= 1:
            raise DomainError(f"emissivity {e} outside (0, 1]")
    if np.any(np.asarray(exitance) < 0):
        raise DomainError("exitance must be non-negative")
    return exitance * (e_to / e_from)


def kelvin(celsius):
    return celsius + 273.15


def celsius(kelvin_):
    return kelvin_ - 273.15
