"""Empirical line calibration: ground-leaving vs at-sensor exitance regression."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import DegenerateFitError, ParseError, PruningRefusedError, UnmatchedTargetError
from .radiometry import PlanckTable, WavelengthBand, band_exitance

N_PARAMS = 2


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float
    fitted: np.ndarray
    residuals: np.ndarray


def ols_fit(x, y) -> LineFit:
    """Simple least-squares line y = slope * x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.unique(x).size < 2:
        raise DegenerateFitError("need at least two distinct regressor values")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = dx @ dx
    slope = (dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    fitted = slope * x + intercept
    resid = y - fitted
    sse = resid @ resid
    sst = (y - ym) @ (y - ym)
    if sst > 0:
        r2 = min(1.0, max(0.0, 1.0 - sse / sst))
    else:
        r2 = 1.0
    return LineFit(float(slope), float(intercept), float(r2), fitted, resid)


@dataclass(frozen=True)
class TargetPair:
    target_id: str
    material: str
    pervious: bool
    ground_exitance: float
    sensor_exitance: float
    location: tuple[float, float] = (0.0, 0.0)
    source_image: str = ""


@dataclass(frozen=True)
class ELCModel:
    gain: float
    offset: float
    r_squared: float
    n_points: int
    band: WavelengthBand | None = None

    def to_dict(self) -> dict:
        d = {"gain": self.gain, "offset": self.offset, "r_squared": self.r_squared, "n_points": self.n_points}
        if self.band is not None:
            d["band_lo_um"] = self.band.lambda_lo
            d["band_hi_um"] = self.band.lambda_hi
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ELCModel":
        band = None
        if "band_lo_um" in d:
            band = WavelengthBand(d["band_lo_um"], d["band_hi_um"])
        return cls(float(d["gain"]), float(d["offset"]), float(d.get("r_squared", float("nan"))), int(d.get("n_points", 0)), band)


@dataclass(frozen=True)
class RegressionDiagnostics:
    ids: tuple[str, ...]
    sensor: np.ndarray
    ground: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    leverage: np.ndarray
    cooks_distance: np.ndarray
    r_squared: float
    residual_std: float

    def to_dict(self) -> dict:
        n = len(self.ids)
        order = np.argsort(self.residuals, kind="stable")
        nd = NormalDist()
        theo = [nd.inv_cdf((i + 1 - 0.375) / (n + 0.25)) for i in range(n)]
        return {
            "r_squared": self.r_squared,
            "residual_std": self.residual_std,
            "points": [
                {
                    "target_id": tid,
                    "sensor_exitance": float(s),
                    "ground_exitance": float(g),
                    "fitted": float(f),
                    "residual": float(r),
                    "leverage": float(h),
                    "cooks_distance": _json_float(d),
                }
                for tid, s, g, f, r, h, d in zip(
                    self.ids, self.sensor, self.ground, self.fitted, self.residuals, self.leverage, self.cooks_distance
                )
            ],
            "normal_qq": [
                {"theoretical": t, "residual": float(self.residuals[i]), "target_id": self.ids[i]}
                for t, i in zip(theo, order)
            ],
        }


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class FieldTarget:
    """A calibration target with its normalized kinetic temperature."""

    target_id: str
    material: str
    kinetic_temp: float  # K
    location: tuple[float, float]


def prepare_pairs(targets, material_table, rasters, table: PlanckTable, window: int = 3) -> list[TargetPair]:
    """Ground-leaving exitance from field temperatures paired with sampled at-sensor exitance.

    Each target is sampled in the first raster whose extent contains it.
    """
    from .raster import sample
    from .spectra import is_pervious

    band = table.band
    pairs = []
    for t in targets:
        eps = material_table.get(t.material, band)
        ground = band_exitance(band, t.kinetic_temp, table.lambda_step) * eps
        x, y = t.location
        hit = next((r for r in rasters if r.contains(x, y)), None)
        if hit is None:
            raise UnmatchedTargetError(f"target {t.target_id} at ({x}, {y}) lies outside all rasters")
        sensor = sample(hit, x, y, window)
        pairs.append(TargetPair(t.target_id, t.material, is_pervious(t.material), float(ground), float(sensor), (x, y), hit.image_id))
    return pairs


def filter_impervious(pairs):
    return [p for p in pairs if not p.pervious]


def regression_diagnostics(ids, x, y) -> tuple[LineFit, RegressionDiagnostics]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    fit = ols_fit(x, y)
    dx = x - x.mean()
    leverage = 1.0 / n + dx**2 / (dx @ dx)
    sse = float(fit.residuals @ fit.residuals)
    dof = n - N_PARAMS
    s2 = sse / dof
    if sse <= 1e-24 * float(y @ y):
        cooks = np.zeros(n)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            one_minus_h = 1.0 - leverage
            std_resid2 = fit.residuals**2 / (s2 * one_minus_h)
            cooks = np.where(one_minus_h > 1e-12, std_resid2 * leverage / (N_PARAMS * one_minus_h), np.inf)
    diag = RegressionDiagnostics(
        tuple(ids), x, y, fit.fitted, fit.residuals, leverage, cooks, fit.r_squared, math.sqrt(s2)
    )
    return fit, diag


def fit_elc(pairs, band: WavelengthBand | None = None) -> tuple[ELCModel, RegressionDiagnostics]:
    """OLS of ground-leaving on at-sensor exitance."""
    if len(pairs) < 3:
        raise DegenerateFitError(f"ELC needs at least 3 pairs, got {len(pairs)}")
    sensor = [p.sensor_exitance for p in pairs]
    if len(set(sensor)) < 2:
        raise DegenerateFitError("all at-sensor exitances are equal")
    fit, diag = regression_diagnostics([p.target_id for p in pairs], sensor, [p.ground_exitance for p in pairs])
    return ELCModel(fit.slope, fit.intercept, fit.r_squared, len(pairs), band), diag


@dataclass(frozen=True)
class PruneResult:
    model: ELCModel
    diagnostics: RegressionDiagnostics
    removed_ids: tuple[str, ...]
    r_squared_before: float
    r_squared_after: float
    threshold: float


def cooks_threshold(rule, cooks: np.ndarray) -> float:
    """Cutoff for a pruning rule: ``"4/n"``, ``"none"``, ``"topK"`` or an absolute number."""
    n = cooks.size
    if isinstance(rule, (int, float)):
        return float(rule)
    rule = str(rule).strip().lower()
    if rule == "4/n":
        return 4.0 / n
    if rule == "none":
        return math.inf
    if rule.startswith("top"):
        k = int(rule[3:].lstrip("-_") or 1)
        if k <= 0:
            return math.inf
        ranked = np.sort(cooks)[::-1]
        # strictly-greater comparison below, so step just under the k-th value
        return float(np.nextafter(ranked[min(k, n) - 1], -math.inf))
    try:
        return float(rule)
    except ValueError:
        raise ValueError(f"unknown Cook's distance rule {rule!r}") from None


def prune_and_refit(pairs, diagnostics: RegressionDiagnostics, threshold_rule="4/n", band=None) -> PruneResult:
    """Drop points whose Cook's distance exceeds the threshold and refit once."""
    if len(pairs) != len(diagnostics.ids):
        raise ValueError("pairs and diagnostics disagree in length")
    thr = cooks_threshold(threshold_rule, diagnostics.cooks_distance)
    drop = diagnostics.cooks_distance > thr
    kept = [p for p, d in zip(pairs, drop) if not d]
    removed = tuple(p.target_id for p, d in zip(pairs, drop) if d)
    if len(kept) < 3:
        raise PruningRefusedError(f"pruning would leave {len(kept)} points (< 3)")
    model, diag = fit_elc(kept, band)
    return PruneResult(model, diag, removed, diagnostics.r_squared, model.r_squared, thr)


def apply_elc(model: ELCModel, sensor_exitance):
    return model.gain * sensor_exitance + model.offset


# serialization ---------------------------------------------------------------

PAIR_COLUMNS = ["target_id", "material", "pervious", "ground_exitance", "sensor_exitance", "x", "y", "image"]


def pairs_to_csv(pairs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PAIR_COLUMNS)
    for p in pairs:
        w.writerow([
            p.target_id, p.material, "true" if p.pervious else "false",
            repr(p.ground_exitance), repr(p.sensor_exitance),
            repr(float(p.location[0])), repr(float(p.location[1])), p.source_image,
        ])
    return buf.getvalue()


def parse_pairs_csv(text: str, source=None) -> list[TargetPair]:
    out = []
    for lineno, row in enumerate(csv.DictReader(io.StringIO(text)), start=2):
        try:
            out.append(TargetPair(
                row["target_id"], row["material"], row["pervious"].strip().lower() in ("true", "1", "yes"),
                float(row["ground_exitance"]), float(row["sensor_exitance"]),
                (float(row.get("x") or 0), float(row.get("y") or 0)), row.get("image") or "",
            ))
        except (KeyError, ValueError, AttributeError) as exc:
            raise ParseError(f"bad pair row: {exc}", lineno, source) from None
    return out


def bundled_pairs(name: str = "elc_targets_n37") -> list[TargetPair]:
    """Synthetic target set shipped with the package (see scripts/make_elc_fixture.py)."""
    from importlib import resources

    text = resources.files(__package__).joinpath("data", f"{name}.csv").read_text()
    return parse_pairs_csv(text, f"bundled:{name}")


def diagnostics_report(all_pairs, first_fit: tuple[ELCModel, RegressionDiagnostics], pruned: PruneResult | None) -> dict:
    """Everything needed to redraw the all-targets scatter and the regression diagnostic panels."""
    model0, diag0 = first_fit
    report = {
        "all_targets": [
            {"target_id": p.target_id, "material": p.material, "pervious": p.pervious,
             "sensor_exitance": p.sensor_exitance, "ground_exitance": p.ground_exitance}
            for p in all_pairs
        ],
        "initial": {"model": model0.to_dict(), "diagnostics": diag0.to_dict()},
    }
    if pruned is not None:
        report["pruned"] = {
            "model": pruned.model.to_dict(),
            "diagnostics": pruned.diagnostics.to_dict(),
            "removed_ids": list(pruned.removed_ids),
            "threshold": _json_float(pruned.threshold),
            "r_squared_before": pruned.r_squared_before,
            "r_squared_after": pruned.r_squared_after,
        }
    return report


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"

