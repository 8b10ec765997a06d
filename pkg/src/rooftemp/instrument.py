"""IR-thermometer readings: radiant to kinetic temperature and inter-instrument normalization.

The thermometer reports the temperature T_d at which a surface of emissivity
``e_device`` (its fixed setting) would emit what it received. A target of
emissivity ``e_target`` at kinetic temperature T_k therefore satisfies
``e_target * M(T_k) = e_device * M(T_d)`` with M the 8-14 um band exitance.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .elc import ols_fit
from .errors import DegenerateFitError, DomainError, ParseError
from .radiometry import PlanckTable, band_exitance, invert_band_exitance, kelvin, rescale_exitance

log = logging.getLogger(__name__)

DEVICE_EMISSIVITY = 0.95
WATER_EMISSIVITY = 0.9838
MIN_CONTROL_SPAN = 5.0  # K
R2_WARNING = 0.95


@dataclass(frozen=True)
class ThermometerReading:
    instrument_id: str
    displayed_temp: float  # K
    target_material: str
    location: tuple[float, float]
    timestamp: float = 0.0
    control_temp: float | None = None  # K
    target_id: str = ""
    building_id: str = ""


@dataclass
class CalibrationSession:
    pairs: dict[str, list[tuple[float, float]]] = field(default_factory=dict)  # id -> [(control K, displayed K)]
    device_emissivity_setting: float = DEVICE_EMISSIVITY
    medium_emissivity: float = WATER_EMISSIVITY

    def add(self, instrument_id: str, control_temp: float, displayed_temp: float) -> None:
        self.pairs.setdefault(instrument_id, []).append((control_temp, displayed_temp))

    def instruments(self) -> list[str]:
        return sorted(self.pairs)


@dataclass(frozen=True)
class InstrumentCalibration:
    instrument_id: str
    slope: float
    offset: float  # K
    r_squared: float
    n: int = 0

    @classmethod
    def identity(cls, instrument_id: str = "") -> "InstrumentCalibration":
        return cls(instrument_id, 1.0, 0.0, 1.0)


def radiant_to_kinetic(displayed_temp, e_device: float, e_target: float, table: PlanckTable):
    m_device = band_exitance(table.band, displayed_temp, table.lambda_step)
    m_kinetic = rescale_exitance(m_device, e_target, e_device)
    return invert_band_exitance(table, m_kinetic)


def kinetic_to_radiant(kinetic_temp, e_device: float, e_target: float, table: PlanckTable):
    """Displayed temperature that ``radiant_to_kinetic`` maps back onto ``kinetic_temp``.

    Uses the table's piecewise-linear exitance so the round trip is exact to
    solver precision; used to synthesize thermometer readings.
    """
    m_kinetic = np.atleast_1d(table.forward(kinetic_temp))
    m_device = rescale_exitance(m_kinetic, e_device, e_target)

    def solve(m):
        return brentq(lambda t: band_exitance(table.band, t, table.lambda_step) - m, 20.0, 2000.0, xtol=1e-13, rtol=1e-15)

    out = np.array([solve(m) for m in m_device])
    return float(out[0]) if np.ndim(kinetic_temp) == 0 else out.reshape(np.shape(kinetic_temp))


def fit_instrument(session: CalibrationSession, instrument_id: str, table: PlanckTable) -> InstrumentCalibration:
    """Regress control (alcohol thermometer) on emissivity-corrected kinetic readings."""
    pairs = session.pairs.get(instrument_id, [])
    if len(pairs) < 2:
        raise DegenerateFitError(f"{instrument_id}: need at least 2 calibration pairs, got {len(pairs)}")
    control = np.array([p[0] for p in pairs], dtype=float)
    displayed = np.array([p[1] for p in pairs], dtype=float)
    kinetic = radiant_to_kinetic(
        displayed, session.device_emissivity_setting, session.medium_emissivity, table
    )
    if np.unique(kinetic).size < 2:
        raise DegenerateFitError(f"{instrument_id}: fewer than 2 distinct kinetic temperatures")
    if np.ptp(control) < MIN_CONTROL_SPAN:
        raise DegenerateFitError(
            f"{instrument_id}: control temperatures span {np.ptp(control):.3g} K < {MIN_CONTROL_SPAN} K"
        )
    fit = ols_fit(kinetic, control)
    if fit.slope <= 0:
        raise DegenerateFitError(f"{instrument_id}: non-positive slope {fit.slope:.4g}")
    return InstrumentCalibration(instrument_id, fit.slope, fit.intercept, fit.r_squared, len(pairs))


def normalize_reading(cal: InstrumentCalibration, kinetic_temp):
    return cal.slope * kinetic_temp + cal.offset


def denormalize_reading(cal: InstrumentCalibration, normalized_temp):
    return (normalized_temp - cal.offset) / cal.slope


def field_kinetic_temps(
    readings,
    calibrations: dict[str, InstrumentCalibration],
    emissivity_of,
    table: PlanckTable,
    e_device: float = DEVICE_EMISSIVITY,
) -> list[float]:
    """Displayed -> kinetic -> normalized temperature (K) for each field reading.

    ``emissivity_of`` maps a material label to its device-band emissivity.
    Instruments without a calibration are passed through unnormalized.
    """
    out = []
    missing = set()
    for r in readings:
        kin = radiant_to_kinetic(r.displayed_temp, e_device, emissivity_of(r.target_material), table)
        cal = calibrations.get(r.instrument_id)
        if cal is None:
            missing.add(r.instrument_id)
            cal = InstrumentCalibration.identity(r.instrument_id)
        out.append(float(normalize_reading(cal, kin)))
    for iid in sorted(missing):
        log.info("no calibration for instrument %s; readings left unnormalized", iid)
    return out


# CSV ingestion ---------------------------------------------------------------

READING_COLUMNS = ["instrument_id", "control_temp_C", "displayed_temp_C", "material", "x", "y", "timestamp"]


def _opt_float(row, key):
    v = (row.get(key) or "").strip()
    return float(v) if v else None


def parse_readings_csv(text: str, source: str | None = None) -> list[ThermometerReading]:
    """Parse field or calibration readings.

    Required columns: instrument_id, displayed_temp_C. Optional: control_temp_C
    (and control_end_C, averaged with it when both bracket a cycle), material,
    x, y, timestamp, target_id, building_id.
    """
    reader = csv.DictReader(io.StringIO(text))
    cols = set(reader.fieldnames or [])
    for required in ("instrument_id", "displayed_temp_C"):
        if required not in cols:
            raise ParseError(f"missing column {required!r}", 1, source)
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            control = _opt_float(row, "control_temp_C")
            control_end = _opt_float(row, "control_end_C")
            if control is not None and control_end is not None:
                control = 0.5 * (control + control_end)
            out.append(
                ThermometerReading(
                    instrument_id=row["instrument_id"].strip(),
                    displayed_temp=kelvin(float(row["displayed_temp_C"])),
                    target_material=(row.get("material") or "").strip(),
                    location=(_opt_float(row, "x") or 0.0, _opt_float(row, "y") or 0.0),
                    timestamp=_opt_float(row, "timestamp") or 0.0,
                    control_temp=None if control is None else kelvin(control),
                    target_id=(row.get("target_id") or "").strip(),
                    building_id=(row.get("building_id") or "").strip(),
                )
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), lineno, source) from None
    return out


def session_from_readings(
    readings: list[ThermometerReading],
    device_emissivity: float = DEVICE_EMISSIVITY,
    medium_emissivity: float = WATER_EMISSIVITY,
    source: str | None = None,
) -> CalibrationSession:
    session = CalibrationSession(device_emissivity_setting=device_emissivity, medium_emissivity=medium_emissivity)
    for r in readings:
        if r.control_temp is None:
            raise ParseError(f"calibration reading for {r.instrument_id} lacks control_temp_C", None, source)
        session.add(r.instrument_id, r.control_temp, r.displayed_temp)
    return session


def _fmt_c(temp_k: float) -> str:
    return repr(round(temp_k - 273.15, 10))


def readings_to_csv(readings: list[ThermometerReading]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(READING_COLUMNS + ["target_id", "building_id"])
    for r in readings:
        w.writerow([
            r.instrument_id,
            "" if r.control_temp is None else _fmt_c(r.control_temp),
            _fmt_c(r.displayed_temp),
            r.target_material,
            repr(float(r.location[0])),
            repr(float(r.location[1])),
            repr(float(r.timestamp)),
            r.target_id,
            r.building_id,
        ])
    return buf.getvalue()


def calibrations_to_csv(cals: list[InstrumentCalibration], errors: dict[str, str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instrument_id", "slope", "offset", "r_squared", "error"])
    for c in cals:
        w.writerow([c.instrument_id, repr(c.slope), repr(c.offset), repr(c.r_squared), ""])
    for iid, msg in sorted((errors or {}).items()):
        w.writerow([iid, "", "", "", msg])
    return buf.getvalue()


def parse_calibrations_csv(text: str) -> dict[str, InstrumentCalibration]:
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        if (row.get("error") or "").strip() or not (row.get("slope") or "").strip():
            continue
        iid = row["instrument_id"].strip()
        out[iid] = InstrumentCalibration(iid, float(row["slope"]), float(row["offset"]), float(row["r_squared"]))
    return out


def fit_all(session: CalibrationSession, table: PlanckTable):
    """Fit every instrument; returns (calibrations, errors by instrument id)."""
    cals, errors = [], {}
    for iid in session.instruments():
        try:
            cal = fit_instrument(session, iid, table)
        except (DegenerateFitError, DomainError) as exc:
            errors[iid] = str(exc)
            continue
        if cal.r_squared < R2_WARNING:
            log.warning("instrument %s: R^2 %.3f below %.2f", iid, cal.r_squared, R2_WARNING)
        cals.append(cal)
    return cals, errors
