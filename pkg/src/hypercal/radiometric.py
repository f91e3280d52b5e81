"""Radiometric chain: dark current, flat field, reference panels, reflectance.

All per-pixel quantities are stored as ``(sample, band)`` arrays; cubes are
``(line, sample, band)``. Negative counts after dark subtraction are kept
(clamping would bias later fits); ``clamp_reflectance`` is the explicit
opt-in for export.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .certified import CertifiedCurve, resample_curve
from .cube import SpectralCube, Units
from .envi import read_envi, write_envi
from .errors import (
    BoundsError,
    CalibrationAbortError,
    CalibrationIntegrityError,
    CalibrationWarning,
    DeadPixelError,
    DimensionError,
    InsufficientDataError,
    ParameterError,
    SchemaError,
)
from .skewnorm import MIN_SAMPLES, fit_skew_normal_batch

logger = logging.getLogger(__name__)

SATURATION_FRACTION = 0.98
PANEL_METHODS = ("mean", "median", "skew_mode")


@dataclass(frozen=True)
class Roi:
    """Rectangle in cube coordinates: ``sample0,line0,width,height``."""

    sample0: int
    line0: int
    width: int
    height: int

    @classmethod
    def parse(cls, text: str) -> "Roi":
        try:
            parts = [int(p) for p in str(text).split(",")]
        except ValueError as exc:
            raise ParameterError(f"ROI must be 'sample0,line0,width,height', got {text!r}") from exc
        if len(parts) != 4:
            raise ParameterError(f"ROI must have 4 integers, got {text!r}")
        return cls(*parts)

    @classmethod
    def full(cls, cube: SpectralCube) -> "Roi":
        return cls(0, 0, cube.samples, cube.lines)

    def check(self, cube: SpectralCube) -> None:
        if (self.width <= 0 or self.height <= 0 or self.sample0 < 0 or self.line0 < 0
                or self.sample0 + self.width > cube.samples or self.line0 + self.height > cube.lines):
            raise BoundsError(f"ROI {self} outside cube of {cube.samples} samples x {cube.lines} lines")

    @property
    def lines_slice(self):
        return slice(self.line0, self.line0 + self.height)

    @property
    def samples_slice(self):
        return slice(self.sample0, self.sample0 + self.width)

    def __str__(self):
        return f"{self.sample0},{self.line0},{self.width},{self.height}"


@dataclass(frozen=True, eq=False)
class DarkFrame:
    offsets: np.ndarray  # (sample, band)
    source_lines: int
    integration_tag: str = ""

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=float)
        if off.ndim != 2:
            raise SchemaError("dark offsets must be a (sample, band) array")
        if not np.all(np.isfinite(off)) or np.any(off < 0):
            raise SchemaError("dark offsets must be finite and non-negative")
        if self.source_lines < 1:
            raise SchemaError("dark frame needs at least one source line")
        object.__setattr__(self, "offsets", off)


@dataclass(frozen=True, eq=False)
class FlatField:
    """Per-pixel relative gains; the per-band median gain is 1."""

    gains: np.ndarray  # (sample, band)

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 2 or not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise SchemaError("flat-field gains must be a finite, positive (sample, band) array")
        object.__setattr__(self, "gains", g)


@dataclass
class PanelStatistic:
    """Robust per-(sample, band) level of a panel ROI, plus diagnostics."""

    values: np.ndarray      # (width, bands)
    method: str
    mean: np.ndarray
    median: np.ndarray
    mode: Optional[np.ndarray] = None
    converged: Optional[np.ndarray] = None

    @property
    def discrepancy(self) -> Optional[np.ndarray]:
        """Relative mean-vs-mode gap, ``(mean - mode) / mode``."""
        if self.mode is None:
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.mean - self.mode) / self.mode


@dataclass(eq=False)
class ReferencePanel:
    """A measured reflectance standard.

    ``stats`` and ``sat_mask`` cover every sample of the source cube; samples
    outside the ROI hold NaN / False.
    """

    certified: CertifiedCurve
    roi: Roi
    stats: np.ndarray       # (samples, bands) dark-subtracted counts
    sat_mask: np.ndarray    # (samples, bands)
    wavelengths: np.ndarray
    method: str = "skew_mode"
    diagnostics: Optional[PanelStatistic] = None

    def certified_per_band(self) -> np.ndarray:
        return resample_curve(self.certified, self.wavelengths)

    @property
    def covered(self) -> np.ndarray:
        """Boolean per sample: inside the ROI."""
        out = np.zeros(self.stats.shape[0], dtype=bool)
        out[self.roi.samples_slice] = True
        return out

    def saturated_bands(self) -> List[int]:
        return np.flatnonzero(self.sat_mask[self.roi.samples_slice].any(axis=0)).tolist()


@dataclass(eq=False)
class LinearCalibration:
    """Per-(sample, band) model ``counts = gain * reflectance + offset``."""

    gain: np.ndarray
    offset: np.ndarray
    n_targets_used: np.ndarray
    fallback: np.ndarray
    warnings: List[str] = field(default_factory=list)


def _require_raw(cube: SpectralCube, what: str):
    if cube.units is not Units.RAW_COUNTS:
        raise ParameterError(f"{what} expects raw counts, got {cube.units.value}")


def _match(cube: SpectralCube, arr: np.ndarray, what: str):
    if arr.shape != (cube.samples, cube.bands):
        raise DimensionError(f"{what} shape {arr.shape} does not match cube (samples, bands) "
                             f"{(cube.samples, cube.bands)}")


def estimate_dark(dark_scan: SpectralCube, integration_tag: str = "") -> DarkFrame:
    """Average a scan taken with the optics blocked into per-pixel offsets."""
    _require_raw(dark_scan, "estimate_dark")
    if dark_scan.lines < 2:
        raise InsufficientDataError(f"dark scan needs >= 2 lines, got {dark_scan.lines}")
    if dark_scan.lines < 32:
        warnings.warn(f"dark scan has only {dark_scan.lines} lines; ~100 are typical", CalibrationWarning,
                      stacklevel=2)
    offsets = np.mean(dark_scan.data, axis=0, dtype=np.float64)
    return DarkFrame(offsets, dark_scan.lines, integration_tag)


def subtract_dark(cube: SpectralCube, dark: DarkFrame) -> SpectralCube:
    """Remove dark offsets from every line. Negative results are preserved."""
    _match(cube, dark.offsets, "dark frame")
    out = np.asarray(cube.data, dtype=np.float64) - dark.offsets[None, :, :]
    meta = dict(cube.metadata)
    meta["dark subtracted"] = "true"
    if np.any(out < 0):
        meta["negative values"] = "true"
    return cube.with_data(out, metadata=meta)


def add_dark(cube: SpectralCube, dark: DarkFrame) -> SpectralCube:
    _match(cube, dark.offsets, "dark frame")
    out = np.asarray(cube.data, dtype=np.float64) + dark.offsets[None, :, :]
    meta = {k: v for k, v in cube.metadata.items() if k not in ("dark subtracted", "negative values")}
    return cube.with_data(out, metadata=meta)


def build_flat_field(uniform_scan: SpectralCube, dark: Optional[DarkFrame] = None) -> FlatField:
    """Per-pixel gains from a scan of a uniform target filling the field of view."""
    values = uniform_scan if dark is None else subtract_dark(uniform_scan, dark)
    means = np.mean(values.data, axis=0, dtype=np.float64)
    bad = np.argwhere(~(means > 0))
    if bad.size:
        raise DeadPixelError(bad)
    return FlatField(means / np.median(means, axis=0, keepdims=True))


def apply_flat_field(cube: SpectralCube, flat: FlatField) -> SpectralCube:
    _match(cube, flat.gains, "flat field")
    meta = dict(cube.metadata)
    meta["flat fielded"] = "true"
    return cube.with_data(np.asarray(cube.data, dtype=np.float64) / flat.gains[None, :, :], metadata=meta)


def saturation_mask(cube: SpectralCube, fraction: float = SATURATION_FRACTION) -> np.ndarray:
    """Boolean (line, sample, band) mask of values at or above ``fraction * code_max``."""
    if not 0 < fraction <= 1:
        raise ParameterError("saturation fraction must be in (0, 1]")
    _require_raw(cube, "saturation_mask")
    return cube.data >= fraction * cube.code_max


def robust_panel_statistic(cube: SpectralCube, roi: Roi, method: str = "skew_mode", workers: int = 1
                           ) -> PanelStatistic:
    """Reduce each (sample, band) column of the ROI along Y.

    ``cube`` should already be dark subtracted. ``skew_mode`` fits a
    skew-normal to every column and takes the density mode.
    """
    if method not in PANEL_METHODS:
        raise ParameterError(f"unknown panel statistic {method!r}; choose from {PANEL_METHODS}")
    roi.check(cube)
    block = np.asarray(cube.data[roi.lines_slice, roi.samples_slice, :], dtype=np.float64)
    mean = block.mean(axis=0)
    median = np.median(block, axis=0)
    if method == "mean":
        return PanelStatistic(mean, method, mean, median)
    if method == "median":
        return PanelStatistic(median, method, mean, median)
    if roi.height < MIN_SAMPLES:
        raise InsufficientDataError(f"skew_mode needs an ROI at least {MIN_SAMPLES} lines tall, got {roi.height}")
    # one problem per (sample, band), observations along Y
    problems = block.reshape(roi.height, -1).T
    fits = fit_skew_normal_batch(problems, workers=workers)
    if not fits.converged.all():
        n_bad = int((~fits.converged).sum())
        warnings.warn(f"{n_bad} skew-normal panel fits hit the iteration limit", CalibrationWarning, stacklevel=2)
    mode = fits.mode.reshape(roi.width, cube.bands)
    return PanelStatistic(mode, method, mean, median, mode=mode,
                          converged=fits.converged.reshape(roi.width, cube.bands))


def measure_panel(
    cube: SpectralCube,
    roi: Roi,
    certified: CertifiedCurve,
    dark: Optional[DarkFrame] = None,
    flat: Optional[FlatField] = None,
    method: str = "skew_mode",
    saturation_fraction: float = SATURATION_FRACTION,
    workers: int = 1,
) -> ReferencePanel:
    """Measure a reference standard imaged in ``cube`` (raw counts)."""
    roi.check(cube)
    sat = np.zeros((cube.samples, cube.bands), dtype=bool)
    if cube.units is Units.RAW_COUNTS and np.isfinite(cube.code_max):
        block = cube.data[roi.lines_slice, roi.samples_slice, :]
        sat[roi.samples_slice] = np.any(block >= saturation_fraction * cube.code_max, axis=0)
    work = cube if dark is None else subtract_dark(cube, dark)
    if flat is not None:
        work = apply_flat_field(work, flat)
    stat = robust_panel_statistic(work, roi, method, workers=workers)
    stats = np.full((cube.samples, cube.bands), np.nan)
    stats[roi.samples_slice] = stat.values
    resample_curve(certified, cube.wavelengths)  # fail early on a short certified range
    return ReferencePanel(certified, roi, stats, sat, np.array(cube.wavelengths), method, stat)


def _band_names(panel_wl, bands):
    return ", ".join(f"{panel_wl[b]:g} nm" for b in bands[:8]) + (" ..." if len(bands) > 8 else "")


def _per_sample_levels(panel: ReferencePanel, samples: int) -> np.ndarray:
    """Panel counts for every sample; samples outside the ROI use the ROI mean per band."""
    if panel.stats.shape[0] != samples:
        raise DimensionError("panel was measured on a cube with a different sample count")
    covered = panel.covered
    if covered.all():
        return panel.stats
    warnings.warn(f"panel ROI {panel.roi} covers {covered.sum()}/{samples} samples; "
                  "using its band mean elsewhere (flat-field the cube first)", CalibrationWarning, stacklevel=3)
    levels = panel.stats.copy()
    levels[~covered] = np.nanmean(panel.stats[covered], axis=0)
    return levels


def single_target_reflectance(
    cube: SpectralCube,
    dark: Optional[DarkFrame],
    panel: ReferencePanel,
    use_nominal: bool = False,
) -> SpectralCube:
    """Scale counts to reflectance factor with one reference standard.

    ``R = (DN - dark) / panel_level * certified(band)``. With
    ``use_nominal`` the panel's nominal value replaces the certified curve
    (the naive calibration, kept for comparison).
    """
    sat = panel.saturated_bands()
    if sat:
        raise CalibrationAbortError(f"reference panel saturated in bands: {_band_names(panel.wavelengths, sat)}",
                                    bands=sat)
    if cube.bands != panel.wavelengths.size or not np.allclose(cube.wavelengths, panel.wavelengths):
        raise DimensionError("panel and cube wavelengths differ")
    work = cube if dark is None else subtract_dark(cube, dark)
    levels = _per_sample_levels(panel, cube.samples)
    if np.any(~(levels > 0)):
        raise CalibrationIntegrityError("panel level must be positive in every (sample, band)")
    cert = np.full(cube.bands, panel.certified.nominal) if use_nominal else panel.certified_per_band()
    scale = cert[None, :] / levels
    out = np.asarray(work.data, dtype=np.float64) * scale[None, :, :]
    return cube.with_data(out, units=Units.REFLECTANCE_FACTOR, code_max=np.inf)


def calibrate_full_field(
    cube: SpectralCube,
    panel_scan: SpectralCube,
    roi: Roi,
    certified: CertifiedCurve,
    dark: Optional[DarkFrame] = None,
    method: str = "skew_mode",
    workers: int = 1,
) -> SpectralCube:
    """Flat field and reflectance scaling in one step from a panel spanning the field of view.

    The panel ROI builds the flat field; the flattened panel then sets the
    per-band reflectance scale.
    """
    if roi.width != panel_scan.samples:
        raise BoundsError("full-field calibration needs a panel ROI spanning every sample")
    roi.check(panel_scan)
    region = panel_scan.with_data(panel_scan.data[roi.lines_slice])
    flat = build_flat_field(region, dark)
    panel = measure_panel(panel_scan, roi, certified, dark=dark, flat=flat, method=method, workers=workers)
    work = cube if dark is None else subtract_dark(cube, dark)
    return single_target_reflectance(apply_flat_field(work, flat), None, panel)


def _ols(x, y, valid):
    """Masked least squares along axis 0; returns gain, offset, n, fallback."""
    n = valid.sum(axis=0)
    w = valid.astype(float)
    nn = np.maximum(n, 1)
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)
    xm = (w * xs).sum(axis=0) / nn
    ym = (w * ys).sum(axis=0) / nn
    dx = np.where(valid, xs - xm, 0.0)
    sxx = (dx * dx).sum(axis=0)
    sxy = (dx * (ys - ym)).sum(axis=0)
    fit = (n >= 2) & (sxx > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(fit, sxy / np.where(fit, sxx, 1.0), ym / xm)
    offset = np.where(fit, ym - gain * xm, 0.0)
    gain = np.where(n == 0, np.nan, gain)
    return gain, offset, n, ~fit


def fit_multi_target(panels: Sequence[ReferencePanel], mode: str = "per_pixel") -> LinearCalibration:
    """Least-squares line ``counts = gain * R + offset`` through unsaturated panels.

    ``mode='per_pixel'`` fits every (sample, band) independently using the
    panels whose ROI covers that sample. ``mode='global'`` averages each
    panel over its ROI and fits once per band (for flat-fielded data).
    Pixels with fewer than two usable panels fall back to a zero-offset
    single-target gain and are listed in ``warnings``.
    """
    if not panels:
        raise InsufficientDataError("no reference panels given")
    wl = panels[0].wavelengths
    for p in panels[1:]:
        if p.stats.shape != panels[0].stats.shape or not np.allclose(p.wavelengths, wl):
            raise DimensionError("all panels must come from cubes with the same samples and wavelengths")
    samples, bands = panels[0].stats.shape
    cert = np.stack([p.certified_per_band() for p in panels])  # (K, B)

    if mode == "per_pixel":
        y = np.stack([p.stats for p in panels])                  # (K, S, B)
        valid = np.isfinite(y) & ~np.stack([p.sat_mask for p in panels])
        x = np.broadcast_to(cert[:, None, :], y.shape)
        gain, offset, n, fallback = _ols(x, y, valid)
    elif mode == "global":
        y = np.empty((len(panels), bands))
        valid = np.empty((len(panels), bands), dtype=bool)
        for k, p in enumerate(panels):
            sl = p.roi.samples_slice
            y[k] = np.mean(p.stats[sl], axis=0)
            valid[k] = ~p.sat_mask[sl].any(axis=0)
        gain, offset, n, fallback = _ols(cert, y, valid)
        gain, offset, n, fallback = (np.broadcast_to(a[None, :], (samples, bands)).copy()
                                     for a in (gain, offset, n, fallback))
    else:
        raise ParameterError(f"unknown multi-target mode {mode!r}")

    notes = []
    for b in np.flatnonzero(fallback.any(axis=0)):
        cnt = int(fallback[:, b].sum())
        notes.append(f"band {wl[b]:g} nm: fewer than 2 usable targets at {cnt} sample(s); "
                     "single-target fallback with zero offset")
    if notes:
        warnings.warn(f"multi-target fit fell back to single target in {len(notes)} band(s)", CalibrationWarning,
                      stacklevel=2)
    return LinearCalibration(gain, offset, n, fallback, notes)


def apply_linear_calibration(cube: SpectralCube, dark: Optional[DarkFrame], cal: LinearCalibration) -> SpectralCube:
    """Invert the fitted line: ``R = (DN - dark - offset) / gain``."""
    if cal.gain.shape != (cube.samples, cube.bands):
        raise DimensionError(f"calibration shape {cal.gain.shape} does not match cube "
                             f"{(cube.samples, cube.bands)}")
    if not np.all(np.isfinite(cal.gain)) or np.any(cal.gain <= 0):
        bad = np.argwhere(~(cal.gain > 0))
        raise CalibrationIntegrityError(f"non-positive or missing gain at {len(bad)} (sample, band) pixel(s), "
                                        f"first {bad[:3].tolist()}")
    work = cube if dark is None else subtract_dark(cube, dark)
    out = (np.asarray(work.data, dtype=np.float64) - cal.offset[None]) / cal.gain[None]
    return cube.with_data(out, units=Units.REFLECTANCE_FACTOR, code_max=np.inf)


def clamp_reflectance(cube: SpectralCube, limit: float = 1.1) -> SpectralCube:
    """Clip reflectance to ``[0, limit]`` for export."""
    if cube.units is not Units.REFLECTANCE_FACTOR:
        raise ParameterError("clamp_reflectance expects a reflectance cube")
    return cube.with_data(np.clip(cube.data, 0.0, limit))


# --- persistence -------------------------------------------------------------

def _planes_cube(planes, wavelengths, kind):
    data = np.stack(planes, axis=0).astype(np.float32)
    return SpectralCube(data, wavelengths, metadata={"calibration product": kind})


def save_product(path, product, wavelengths, provenance: Optional[Dict] = None) -> Path:
    """Write a DarkFrame, FlatField or LinearCalibration as an ENVI cube plus JSON sidecar.

    Each component occupies one line of the cube, so the bands stay as
    planes over samples.
    """
    if isinstance(product, DarkFrame):
        kind, planes = "dark_frame", [product.offsets]
        extra = {"source_lines": product.source_lines, "integration_tag": product.integration_tag}
    elif isinstance(product, FlatField):
        kind, planes, extra = "flat_field", [product.gains], {}
    elif isinstance(product, LinearCalibration):
        kind = "linear_calibration"
        planes = [product.gain, product.offset, product.n_targets_used, product.fallback]
        extra = {"warnings": product.warnings, "components": ["gain", "offset", "n_targets_used", "fallback"]}
    else:
        raise TypeError(f"cannot persist {type(product).__name__}")
    hdr = write_envi(path, _planes_cube(planes, wavelengths, kind))
    sidecar = {"kind": kind, **extra, "provenance": provenance or {}}
    hdr.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, default=str), encoding="utf-8")
    return hdr


def load_product(path):
    """Inverse of ``save_product``; returns ``(product, wavelengths)``."""
    cube = read_envi(path)
    meta = json.loads(Path(path).with_suffix(".json").read_text(encoding="utf-8"))
    planes = np.asarray(cube.data, dtype=np.float64)
    kind = meta["kind"]
    if kind == "dark_frame":
        product = DarkFrame(planes[0], int(meta["source_lines"]), meta.get("integration_tag", ""))
    elif kind == "flat_field":
        product = FlatField(planes[0])
    elif kind == "linear_calibration":
        product = LinearCalibration(planes[0], planes[1], planes[2].astype(int), planes[3].astype(bool),
                                    list(meta.get("warnings", [])))
    else:
        raise SchemaError(f"unknown calibration product kind {kind!r}")
    return product, np.array(cube.wavelengths)
