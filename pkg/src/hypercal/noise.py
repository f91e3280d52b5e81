"""Frame averaging, SNR estimation and simple denoising filters."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import savgol_coeffs, savgol_filter

from ._parallel import map_blocks
from .cube import SpectralCube
from .errors import CalibrationWarning, DimensionError, ParameterError
from .radiometric import Roi


@dataclass
class SnrReport:
    wavelengths: np.ndarray
    snr: np.ndarray
    roi: Roi

    def to_csv(self) -> str:
        rows = ["wavelength_nm,snr"]
        rows += [f"{w:g},{s:.6g}" for w, s in zip(self.wavelengths, self.snr)]
        return "\n".join(rows) + "\n"


def frame_average(frames: Sequence[SpectralCube]) -> SpectralCube:
    """Pointwise mean of co-registered repeat scans."""
    if not frames:
        raise ParameterError("frame_average needs at least one frame")
    first = frames[0]
    for f in frames[1:]:
        if f.shape != first.shape or not np.array_equal(f.wavelengths, first.wavelengths):
            raise DimensionError("all frames must share shape and wavelengths")
    if len(frames) == 1:
        return first
    acc = np.zeros(first.shape, dtype=np.float64)
    for f in frames:
        acc += f.data
    acc /= len(frames)
    return first.with_data(acc)


def estimate_snr(cube: SpectralCube, roi: Roi) -> SnrReport:
    """Per-band mean / standard deviation over a uniform ROI.

    Bands with zero spread get ``inf``.
    """
    roi.check(cube)
    block = np.asarray(cube.data[roi.lines_slice, roi.samples_slice, :], dtype=np.float64)
    block = block.reshape(-1, cube.bands)
    mean = block.mean(axis=0)
    std = block.std(axis=0)
    flat = std == 0
    if flat.any():
        warnings.warn(f"{int(flat.sum())} band(s) have zero spread in ROI; SNR reported as inf",
                      CalibrationWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(flat, np.inf, np.abs(mean) / np.where(flat, 1.0, std))
    return SnrReport(np.array(cube.wavelengths), snr, roi)


def smoothing_weights(window: int, degree: int) -> np.ndarray:
    """Central least-squares polynomial smoothing weights."""
    return savgol_coeffs(window, degree)


def denoise_spectral(cube: SpectralCube, window: int = 7, degree: int = 2, workers: int = 1) -> SpectralCube:
    """Local polynomial (Savitzky-Golay) smoothing of every spectrum.

    Interior bands use the symmetric convolution weights. The first and last
    ``window // 2`` bands take the value of the least-squares polynomial
    fitted to the edge window, so any polynomial of degree <= ``degree`` is
    reproduced exactly everywhere.
    """
    if window % 2 == 0 or window < 3 or window > cube.bands:
        raise ParameterError(f"window must be odd and within [3, bands={cube.bands}], got {window}")
    if not 0 <= degree < window:
        raise ParameterError(f"degree must be in [0, window), got {degree}")
    data = np.asarray(cube.data, dtype=np.float64)
    out = np.empty_like(data)

    def run(sl):
        out[sl] = savgol_filter(data[sl], window, degree, axis=2, mode="interp")

    map_blocks(run, cube.lines, 64, workers)
    return cube.with_data(out)


def denoise_spatial_median(cube: SpectralCube, radius: int = 1, workers: int = 1) -> SpectralCube:
    """Square median filter of side ``2 * radius + 1`` per band, mirror-padded."""
    if radius < 1:
        raise ParameterError("radius must be >= 1")
    if radius >= min(cube.samples, cube.lines):
        raise ParameterError(f"radius {radius} too large for {cube.lines}x{cube.samples} bands")
    size = 2 * radius + 1
    data = np.asarray(cube.data)
    out = np.empty(data.shape, dtype=data.dtype)

    def run(sl):
        for b in range(sl.start, sl.stop):
            out[:, :, b] = median_filter(data[:, :, b], size=size, mode="mirror")

    map_blocks(run, cube.bands, 8, workers)
    return cube.with_data(out)
