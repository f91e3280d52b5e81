"""Across-track sensor-model resampling and along-track aspect correction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import SpectralCube
from .errors import FormatError, ParameterError, SuspiciousScaleError

SCALE_WINDOW = (0.5, 2.0)


@dataclass(frozen=True, eq=False)
class SensorModel:
    """Relative effective size of every across-track pixel.

    A size of 1.0 corresponds to ``reference_pitch``; positions along the
    scan line are obtained by prefix-summing the sizes.
    """

    effective_size: np.ndarray
    reference_pitch: float = 1.0

    def __post_init__(self):
        sizes = np.array(self.effective_size, dtype=float).reshape(-1)
        if sizes.size < 1 or not np.all(np.isfinite(sizes)) or np.any(sizes <= 0):
            raise FormatError("effective pixel sizes must be finite and positive")
        sizes.flags.writeable = False
        object.__setattr__(self, "effective_size", sizes)

    def __len__(self):
        return self.effective_size.size

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.effective_size)])

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def extent(self) -> float:
        return float(self.edges[-1])

    @property
    def spread(self) -> float:
        """max/min size ratio."""
        return float(self.effective_size.max() / self.effective_size.min())

    @classmethod
    def identity(cls, samples: int) -> "SensorModel":
        return cls(np.ones(samples))


def v_profile(samples: int, center: float = 0.83) -> SensorModel:
    """Symmetric model: size 1.0 at both edges falling linearly to ``center`` mid-line."""
    u = np.abs(2.0 * (np.arange(samples) + 0.5) / samples - 1.0)
    return SensorModel(center + (1.0 - center) * u)


def parse_sensor_model(csv_text: str) -> SensorModel:
    """Parse ``sample_index,effective_size`` (or ``sample_index,view_angle``).

    Angle-based rows give each pixel's angular extent; under the small-angle
    approximation these are proportional to sizes and are normalized so the
    largest pixel has size 1.
    """
    rows = [r for r in csv.reader(io.StringIO(csv_text)) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise FormatError("empty sensor-model CSV")
    head = [c.strip().lower() for c in rows[0]]
    if len(head) < 2 or head[0] != "sample_index" or head[1] not in ("effective_size", "view_angle"):
        raise FormatError("expected header 'sample_index,effective_size' or 'sample_index,view_angle'")
    idx, val = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            idx.append(int(row[0]))
            val.append(float(row[1]))
        except (ValueError, IndexError) as exc:
            raise FormatError(f"row {lineno}: expected an integer index and a number") from exc
    idx = np.asarray(idx)
    if not np.array_equal(idx, np.arange(idx.size)):
        raise FormatError("sample indices must be contiguous from 0")
    val = np.asarray(val)
    if np.any(~(val > 0)):
        raise FormatError("sizes must be positive")
    if head[1] == "view_angle":
        val = val / val.max()
    return SensorModel(val)


def read_sensor_model(path) -> SensorModel:
    return parse_sensor_model(Path(path).read_text(encoding="utf-8"))


def format_sensor_model(model: SensorModel) -> str:
    rows = ["sample_index,effective_size"] + [f"{i},{s!r}" for i, s in enumerate(model.effective_size.tolist())]
    return "\n".join(rows) + "\n"


def _interp_axis(data: np.ndarray, src_pos: np.ndarray, dst_pos: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation of ``data`` along ``axis`` from ``src_pos`` to ``dst_pos`` (edge-clamped)."""
    j = np.searchsorted(src_pos, dst_pos, side="right") - 1
    j = np.clip(j, 0, src_pos.size - 2)
    t = (dst_pos - src_pos[j]) / (src_pos[j + 1] - src_pos[j])
    t = np.clip(t, 0.0, 1.0)
    shape = [1] * data.ndim
    shape[axis] = -1
    t = t.reshape(shape)
    a = np.take(data, j, axis=axis)
    b = np.take(data, j + 1, axis=axis)
    return a + (b - a) * t


def resample_across_track(cube: SpectralCube, model: SensorModel, out_samples: int | None = None) -> SpectralCube:
    """Resample every scan line from the sensor model's pixel centres onto a uniform grid.

    The uniform grid has ``out_samples`` pixels spanning the model's full
    physical extent; its pitch is recorded in the metadata.
    """
    if len(model) != cube.samples:
        raise ParameterError(f"sensor model has {len(model)} pixels, cube has {cube.samples} samples")
    out_samples = cube.samples if out_samples is None else int(out_samples)
    if out_samples < 2:
        raise ParameterError("out_samples must be >= 2")
    pitch = model.extent / out_samples
    dst = (np.arange(out_samples) + 0.5) * pitch
    data = np.asarray(cube.data, dtype=np.float64)
    if cube.samples == 1:
        out = np.repeat(data, out_samples, axis=1)
    else:
        out = _interp_axis(data, model.centers, dst, axis=1)
    meta = dict(cube.metadata)
    meta["across track pitch"] = repr(pitch * model.reference_pitch)
    return cube.with_data(out, metadata=meta)


@dataclass(frozen=True)
class ScaleEstimate:
    factor: float
    source: str = ""


def estimate_scale_from_target(known_length_mm: float, measured_pixels: float, nominal_pixel_pitch_mm: float,
                               source: str = "ruler") -> ScaleEstimate:
    """Along-track correction factor from a ruler or grid of known length."""
    if min(known_length_mm, measured_pixels, nominal_pixel_pitch_mm) <= 0:
        raise ParameterError("length, pixel count and pitch must be positive")
    factor = known_length_mm / (measured_pixels * nominal_pixel_pitch_mm)
    lo, hi = SCALE_WINDOW
    if not lo <= factor <= hi:
        raise SuspiciousScaleError(f"scale factor {factor:.4g} outside sanity window [{lo}, {hi}]")
    return ScaleEstimate(factor, f"{source}: {known_length_mm:g} mm over {measured_pixels:g} px "
                                 f"at {nominal_pixel_pitch_mm:g} mm/px")


def rescale_aspect(cube: SpectralCube, factor: float) -> SpectralCube:
    """Stretch the along-track axis to ``round(lines * factor)`` lines.

    Output line centres map back to input coordinates via the pixel-centre
    convention, so the physical extent scales exactly by ``factor``.
    """
    lo, hi = SCALE_WINDOW
    if not lo <= factor <= hi:
        raise SuspiciousScaleError(f"scale factor {factor:.4g} outside sanity window [{lo}, {hi}]")
    n_out = int(round(cube.lines * factor))
    if n_out < 2:
        raise ParameterError(f"rescaling to {n_out} lines")
    if n_out == cube.lines and factor == 1.0:
        return cube.with_data(np.asarray(cube.data, dtype=np.float64))
    src = np.arange(cube.lines) + 0.5
    dst = (np.arange(n_out) + 0.5) / factor
    data = np.asarray(cube.data, dtype=np.float64)
    if cube.lines == 1:
        out = np.repeat(data, n_out, axis=0)
    else:
        out = _interp_axis(data, src, dst, axis=0)
    return cube.with_data(out)
