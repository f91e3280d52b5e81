"""Acquisition planning: spectral efficiency, focus curves, integration time."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .cube import SpectralCube
from .fixtures import fixture_text
from .errors import (
    DegenerateError,
    DimensionError,
    DomainError,
    FormatError,
    ParameterError,
    RangeError,
    SaturatedInputError,
)

logger = logging.getLogger(__name__)


class CurveKind(str, Enum):
    QUANTUM_EFFICIENCY = "quantum_efficiency"
    RELATIVE_POWER = "relative_power"
    TRANSMISSION = "transmission"
    RELATIVE_EFFICIENCY = "relative_efficiency"


_BOUNDED = (CurveKind.QUANTUM_EFFICIENCY, CurveKind.TRANSMISSION)


@dataclass(frozen=True, eq=False)
class SpectralCurve:
    """Tabulated spectral quantity, linearly interpolated between knots."""

    wavelengths: np.ndarray
    values: np.ndarray
    kind: CurveKind = CurveKind.RELATIVE_EFFICIENCY

    def __post_init__(self):
        wl = np.array(self.wavelengths, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if wl.size != v.size or wl.size < 2:
            raise FormatError("curve needs >= 2 (wavelength, value) pairs of equal length")
        if np.any(np.diff(wl) <= 0):
            raise FormatError("curve wavelengths must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise RangeError("curve values must be finite and non-negative")
        kind = CurveKind(self.kind)
        if kind in _BOUNDED and np.any(v > 1):
            raise RangeError(f"{kind.value} values must lie in [0, 1]")
        wl.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", kind)

    @property
    def domain(self) -> Tuple[float, float]:
        return float(self.wavelengths[0]), float(self.wavelengths[-1])

    def __call__(self, wavelength):
        lo, hi = self.domain
        w = np.asarray(wavelength, dtype=float)
        if np.any((w < lo - 1e-9) | (w > hi + 1e-9)):
            raise DomainError(f"wavelength outside curve domain [{lo:g}, {hi:g}] nm")
        return np.interp(w, self.wavelengths, self.values)

    @property
    def peak(self) -> float:
        return float(self.values.max())

    @property
    def peak_wavelength(self) -> float:
        return float(self.wavelengths[int(np.argmax(self.values))])

    @classmethod
    def flat(cls, value, lo=350.0, hi=2600.0, kind=CurveKind.RELATIVE_EFFICIENCY):
        return cls(np.array([lo, hi]), np.array([value, value]), kind)


def parse_curve(csv_text: str, kind=CurveKind.RELATIVE_EFFICIENCY) -> SpectralCurve:
    """Parse ``wavelength_nm,value`` CSV text."""
    rows = [r for r in csv.reader(io.StringIO(csv_text)) if r and not r[0].lstrip().startswith("#")]
    if not rows or [c.strip().lower() for c in rows[0][:2]] != ["wavelength_nm", "value"]:
        raise FormatError("expected header 'wavelength_nm,value'")
    try:
        arr = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed curve row: {exc}") from exc
    if arr.size == 0:
        raise FormatError("curve has no data rows")
    return SpectralCurve(arr[:, 0], arr[:, 1], kind)


def read_curve(path, kind=CurveKind.RELATIVE_EFFICIENCY) -> SpectralCurve:
    return parse_curve(Path(path).read_text(encoding="utf-8"), kind)


def format_curve(curve: SpectralCurve) -> str:
    rows = ["wavelength_nm,value"] + [f"{w:g},{v:.8g}" for w, v in zip(curve.wavelengths, curve.values)]
    return "\n".join(rows) + "\n"


def fixture_curve(name: str) -> SpectralCurve:
    """Bundled curve: ``qe_ccd``, ``illuminant_halogen`` or ``equalization_filter``."""
    kinds = {
        "qe_ccd": CurveKind.QUANTUM_EFFICIENCY,
        "illuminant_halogen": CurveKind.RELATIVE_POWER,
        "equalization_filter": CurveKind.TRANSMISSION,
    }
    if name not in kinds:
        raise ParameterError(f"unknown fixture curve {name!r}; choose from {sorted(kinds)}")
    return parse_curve(fixture_text(f"{name}.csv"), kinds[name])


def system_efficiency(qe: SpectralCurve, illuminant: SpectralCurve, filter: SpectralCurve | None = None) -> SpectralCurve:
    """Pointwise product of the curves on the union of their knots inside the common interval."""
    curves = [qe, illuminant] + ([filter] if filter is not None else [])
    lo = max(c.domain[0] for c in curves)
    hi = min(c.domain[1] for c in curves)
    if not hi > lo:
        raise DomainError("curves share no common wavelength interval")
    knots = np.unique(np.concatenate([c.wavelengths for c in curves] + [[lo, hi]]))
    knots = knots[(knots >= lo) & (knots <= hi)]
    prod = np.ones_like(knots)
    for c in curves:
        prod = prod * np.interp(knots, c.wavelengths, c.values)
    return SpectralCurve(knots, prod, CurveKind.RELATIVE_EFFICIENCY)


def integration_multiplier(eff_without: SpectralCurve, eff_with: SpectralCurve) -> float:
    """Factor by which integration must grow to restore the unfiltered peak signal."""
    if eff_with.peak <= 0 or eff_without.peak <= 0:
        raise DegenerateError("efficiency curve has zero peak")
    return eff_without.peak / eff_with.peak


def flatness(curve: SpectralCurve, lo: float, hi: float) -> float:
    """max/min ratio of a curve over ``[lo, hi]`` (evaluated on its knots and the interval ends)."""
    w = np.unique(np.concatenate([[lo, hi], curve.wavelengths[(curve.wavelengths > lo) & (curve.wavelengths < hi)]]))
    v = curve(w)
    if v.min() <= 0:
        return np.inf
    return float(v.max() / v.min())


# --- focus -------------------------------------------------------------------

def sharpness(band_image) -> float:
    """Population variance of the image."""
    a = np.asarray(band_image, dtype=np.float64)
    if a.size == 0:
        raise ParameterError("empty image")
    return float(a.var())


@dataclass
class FocusSeries:
    distances: np.ndarray
    cubes: List[SpectralCube]

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=float)
        if self.distances.size != len(self.cubes):
            raise DimensionError("one cube per distance required")
        if np.unique(self.distances).size < 3:
            raise ParameterError("focus series needs >= 3 distinct distances")
        wl = self.cubes[0].wavelengths
        if any(not np.array_equal(c.wavelengths, wl) for c in self.cubes[1:]):
            raise DimensionError("focus series cubes must share wavelengths")
        order = np.argsort(self.distances, kind="stable")
        self.distances = self.distances[order]
        self.cubes = [self.cubes[i] for i in order]


@dataclass
class FocusResult:
    wavelengths: np.ndarray
    optimal_distance: np.ndarray
    peak_sharpness: np.ndarray
    at_edge: np.ndarray
    no_peak: np.ndarray

    def to_csv(self) -> str:
        rows = ["wavelength_nm,optimal_distance,peak_sharpness,at_edge"]
        for w, d, s, e in zip(self.wavelengths, self.optimal_distance, self.peak_sharpness, self.at_edge):
            rows.append(f"{w:g},{d:.6g},{s:.6g},{int(e)}")
        return "\n".join(rows) + "\n"


def sharpness_table(series: FocusSeries) -> np.ndarray:
    """(distances, bands) array of per-band image variance."""
    return np.stack([np.asarray(c.data, dtype=np.float64).var(axis=(0, 1)) for c in series.cubes])


def focus_curves(series: FocusSeries) -> FocusResult:
    """Per-band best focus distance.

    The sharpest distance is refined by a parabola through it and its two
    neighbours (non-uniform spacing allowed). Peaks at either end of the
    series are reported unrefined and flagged ``at_edge``; bands whose
    sharpness does not vary are flagged ``no_peak``.
    """
    d = series.distances
    table = sharpness_table(series)
    n, bands = table.shape
    best = np.argmax(table, axis=0)
    opt = d[best].copy()
    peak = table[best, np.arange(bands)]
    no_peak = np.ptp(table, axis=0) <= 1e-12 * np.maximum(np.abs(table).max(axis=0), 1e-300)
    at_edge = ((best == 0) | (best == n - 1)) & ~no_peak
    for b in np.flatnonzero(~(at_edge | no_peak)):
        i = best[b]
        x = d[i - 1:i + 2]
        y = table[i - 1:i + 2, b]
        c2, c1, c0 = np.polyfit(x, y, 2)
        if c2 < 0:
            xv = -c1 / (2.0 * c2)
            if x[0] <= xv <= x[2]:
                opt[b] = xv
                peak[b] = c0 + c1 * xv + c2 * xv * xv
    return FocusResult(np.array(series.cubes[0].wavelengths), opt, peak, at_edge, no_peak)


def recommend_integration(measured_max_dn: float, current_integration: float, code_max: float,
                          target_fraction: float = 0.8) -> float:
    """Integration time that brings the brightest pixel to ``target_fraction`` of full scale (linear response)."""
    if not measured_max_dn > 0:
        raise ParameterError("measured maximum must be positive")
    if current_integration <= 0 or code_max <= 0:
        raise ParameterError("integration time and code_max must be positive")
    if not 0 < target_fraction <= 1:
        raise ParameterError("target_fraction must be in (0, 1]")
    if measured_max_dn >= code_max:
        raise SaturatedInputError("measured maximum is at full scale; response is clipped, reduce integration first")
    return current_integration * (target_fraction * code_max) / measured_max_dn
