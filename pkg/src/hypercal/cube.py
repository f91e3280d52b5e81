"""Core spectral cube data model."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from .errors import SchemaError


class Units(str, enum.Enum):
    RAW_COUNTS = "raw_counts"
    REFLECTANCE_FACTOR = "reflectance_factor"


def _frozen_view(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.flags.writeable = False
    return view


def band_sequential(data: np.ndarray) -> np.ndarray:
    """Return ``data`` (line, sample, band) backed by band-sequential memory.

    Indexing is unchanged; only the memory layout moves so that each band
    plane is contiguous.
    """
    bsq = np.ascontiguousarray(np.moveaxis(data, 2, 0))
    return np.moveaxis(bsq, 0, 2)


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """A hyperspectral cube indexed ``data[line, sample, band]``.

    Parameters
    ----------
    data : ndarray, shape (lines, samples, bands)
        Pixel values. Stored as a read-only view.
    wavelengths : array_like
        Band centres in nm, strictly increasing, one per band.
    code_max : float
        Largest digital number the source detector can report. ``inf`` for
        data without a quantizer (e.g. floating-point reflectance).
    units : Units
        ``raw_counts`` or ``reflectance_factor``.
    metadata : mapping
        Extra ENVI header entries (preserved verbatim on write) and
        processing flags.
    nodata : float or None
        Sentinel marking pixels without support (NaN permitted when set).
    """

    data: np.ndarray
    wavelengths: np.ndarray
    code_max: float = np.inf
    units: Units = Units.RAW_COUNTS
    metadata: Mapping[str, Any] = field(default_factory=dict)
    nodata: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise SchemaError(f"cube data must be 3-D (line, sample, band), got shape {data.shape}")
        if min(data.shape) <= 0:
            raise SchemaError(f"cube dimensions must be positive, got {data.shape}")
        wl = np.asarray(self.wavelengths, dtype=float).reshape(-1)
        if wl.size != data.shape[2]:
            raise SchemaError(f"{wl.size} wavelengths for {data.shape[2]} bands")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise SchemaError("wavelengths must be strictly increasing")
        units = Units(self.units)
        if units is Units.REFLECTANCE_FACTOR and np.issubdtype(data.dtype, np.floating):
            finite = np.isfinite(data)
            if not finite.all():
                nan_ok = self.nodata is not None and np.isnan(self.nodata)
                if not (nan_ok and not np.isinf(data).any()):
                    raise SchemaError("reflectance cube contains non-finite values")
        object.__setattr__(self, "data", _frozen_view(data))
        object.__setattr__(self, "wavelengths", _frozen_view(wl))
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "code_max", float(self.code_max))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def lines(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def band(self, index: int) -> np.ndarray:
        """2-D (line, sample) image of one band."""
        return self.data[:, :, index]

    def nearest_band(self, wavelength: float) -> int:
        return int(np.argmin(np.abs(self.wavelengths - wavelength)))

    def with_data(self, data, **changes) -> "SpectralCube":
        """Copy of this cube carrying new pixel values (and optional field changes)."""
        return replace(self, data=data, **changes)

    def equals(self, other: "SpectralCube") -> bool:
        """Exact equality of shape, dtype-independent values, and wavelengths."""
        return (
            self.shape == other.shape
            and np.array_equal(self.wavelengths, other.wavelengths)
            and np.array_equal(self.data, other.data, equal_nan=np.issubdtype(self.data.dtype, np.floating))
            and self.units == other.units
        )

    def __repr__(self):
        return (
            f"SpectralCube(lines={self.lines}, samples={self.samples}, bands={self.bands}, "
            f"dtype={self.data.dtype}, units={self.units.value}, "
            f"wavelengths=[{self.wavelengths[0]:g}..{self.wavelengths[-1]:g}])"
        )
