"""Certified reflectance curves for reference standards."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DomainError, FormatError, RangeError

MAX_CERTIFIED = 1.1


@dataclass(frozen=True, eq=False)
class CertifiedCurve:
    """Laboratory-certified reflectance factor of a standard versus wavelength.

    ``nominal`` is the marketed reflectance (0.99, 0.50, ...) that naive
    calibrations assume at every wavelength.
    """

    wavelengths: np.ndarray
    reflectance: np.ndarray
    nominal: float

    def __post_init__(self):
        wl = np.array(self.wavelengths, dtype=float)
        r = np.array(self.reflectance, dtype=float)
        if wl.ndim != 1 or wl.shape != r.shape:
            raise FormatError("wavelength and reflectance columns must be 1-D and equal length")
        if wl.size < 2:
            raise FormatError("a certified curve needs at least 2 points")
        if not np.all(np.diff(wl) > 0):
            raise FormatError("certified wavelengths must be strictly increasing")
        if not np.all((r > 0) & (r <= MAX_CERTIFIED)):
            raise RangeError(f"certified reflectance must lie in (0, {MAX_CERTIFIED}]")
        for name, arr in (("wavelengths", wl), ("reflectance", r)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "nominal", float(self.nominal))

    @classmethod
    def constant(cls, value: float, lo: float = 300.0, hi: float = 2600.0) -> "CertifiedCurve":
        return cls(np.array([lo, hi]), np.array([value, value]), nominal=value)

    @property
    def domain(self):
        return float(self.wavelengths[0]), float(self.wavelengths[-1])


def parse_certified_curve(csv_text: str, nominal: Optional[float] = None) -> CertifiedCurve:
    """Parse a ``wavelength_nm,reflectance`` CSV.

    Rows must already be in increasing wavelength order. When ``nominal`` is
    not given it defaults to the median certified value rounded to 3
    decimals.
    """
    reader = csv.reader(io.StringIO(csv_text))
    rows = [r for r in reader if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise FormatError("empty certified-curve CSV")
    head = [c.strip().lower() for c in rows[0]]
    if head[:2] != ["wavelength_nm", "reflectance"]:
        raise FormatError(f"expected header 'wavelength_nm,reflectance', got {','.join(rows[0])!r}")
    wl, refl = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise FormatError(f"row {lineno}: expected two columns")
        try:
            wl.append(float(row[0]))
            refl.append(float(row[1]))
        except ValueError as exc:
            raise FormatError(f"row {lineno}: non-numeric value") from exc
    refl_arr = np.asarray(refl)
    if nominal is None:
        nominal = round(float(np.median(refl_arr)), 3) if refl_arr.size else 0.0
    return CertifiedCurve(np.asarray(wl), refl_arr, nominal)


def read_certified_curve(path: Union[str, Path], nominal: Optional[float] = None) -> CertifiedCurve:
    return parse_certified_curve(Path(path).read_text(encoding="utf-8"), nominal=nominal)


def format_certified_curve(curve: CertifiedCurve) -> str:
    lines = ["wavelength_nm,reflectance"]
    lines += [f"{w!r},{r!r}" for w, r in zip(curve.wavelengths.tolist(), curve.reflectance.tolist())]
    return "\n".join(lines) + "\n"


def resample_curve(curve: CertifiedCurve, targets, tol: float = 1e-9) -> np.ndarray:
    """Piecewise-linear certified reflectance at each target wavelength.

    Extrapolation is refused: every target must lie inside the certified
    domain.
    """
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    lo, hi = curve.domain
    outside = (t < lo - tol) | (t > hi + tol)
    if outside.any():
        bad = t[outside]
        raise DomainError(f"wavelengths {bad[:5].tolist()} outside certified range [{lo:g}, {hi:g}] nm")
    return np.interp(t, curve.wavelengths, curve.reflectance)
