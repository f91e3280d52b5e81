"""VNIR/SWIR co-registration and strip mosaicking.

Geometry is translation plus per-axis scale. A source pixel index ``i``
covers ``[i, i + 1)`` in continuous coordinates, and a transform maps
source to reference coordinates as ``ref = scale * src + offset``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .cube import SpectralCube
from .errors import (
    CalibrationWarning,
    CannotCoregisterError,
    DimensionError,
    LayoutError,
    LowConfidenceError,
    MisalignmentError,
    NoSignalError,
    ParameterError,
)
from .optimize import nelder_mead_batch

logger = logging.getLogger(__name__)

NODATA = np.nan


@dataclass(frozen=True)
class Translation2D:
    dx: float
    dy: float
    confidence: float = 1.0

    def __neg__(self):
        return Translation2D(-self.dx, -self.dy, self.confidence)


def _hann2d(shape):
    wy = np.hanning(shape[0] + 2)[1:-1]
    wx = np.hanning(shape[1] + 2)[1:-1]
    return np.outer(wy, wx)


def _peak_offset(cm, c0, cp):
    """Sub-sample offset of a 3-point peak (Gaussian fit, parabolic fallback)."""
    if cm > 0 and c0 > 0 and cp > 0:
        lm, l0, lp = np.log(cm), np.log(c0), np.log(cp)
        denom = lm - 2.0 * l0 + lp
    else:
        lm, l0, lp = cm, c0, cp
        denom = cm - 2.0 * c0 + cp
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (lm - lp) / denom, -0.5, 0.5))


def estimate_translation(image_a, image_b, window: bool = True, peak_width: float = 1.0) -> Translation2D:
    """Shift of ``image_b`` relative to ``image_a`` by phase correlation.

    Returns ``(dx, dy)`` such that ``image_b(x, y) ~ image_a(x - dx, y - dy)``.
    The cross-power spectrum is normalized to unit magnitude and tapered by a
    Gaussian so the correlation peak is a sampled Gaussian of width
    ``peak_width`` pixels; the integer peak is then refined on the 3x3
    neighbourhood by a log-parabola per axis. ``confidence`` is the
    normalized peak height (1 for identical images).
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(f"images must be equal-shaped 2-D arrays, got {a.shape} and {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    if not (np.any(a) and np.any(b)):
        raise NoSignalError("constant image: no signal to correlate")
    if window:
        w = _hann2d(a.shape)
        a, b = a * w, b * w
    fa = np.fft.fft2(a)
    fb = np.fft.fft2(b)
    cross = fb * np.conj(fa)
    mag = np.abs(cross)
    cross = np.where(mag > 1e-12 * mag.max(), cross / np.maximum(mag, 1e-300), 0.0)
    fy = np.fft.fftfreq(a.shape[0])[:, None]
    fx = np.fft.fftfreq(a.shape[1])[None, :]
    sigma_f = 1.0 / (2.0 * np.pi * peak_width)
    taper = np.exp(-0.5 * (fx**2 + fy**2) / sigma_f**2)
    corr = np.fft.ifft2(cross * taper).real
    norm = taper[np.abs(cross) > 0].sum() / cross.size
    iy, ix = np.unravel_index(int(np.argmax(corr)), corr.shape)
    H, W = corr.shape
    c0 = corr[iy, ix]
    sy = _peak_offset(corr[(iy - 1) % H, ix], c0, corr[(iy + 1) % H, ix])
    sx = _peak_offset(corr[iy, (ix - 1) % W], c0, corr[iy, (ix + 1) % W])
    dy = (iy - H if iy > H // 2 else iy) + sy
    dx = (ix - W if ix > W // 2 else ix) + sx
    confidence = float(np.clip(c0 / norm, 0.0, 1.0)) if norm > 0 else 0.0
    return Translation2D(float(dx), float(dy), confidence)


def _axis_weights(n_out, n_src, scale, offset):
    """Bilinear source indices/weights for output pixels along one axis.

    Returns ``(i0, t, inside)``; pixels whose centre falls outside the source
    footprint ``[0, n_src)`` are flagged out of support.
    """
    u = (np.arange(n_out) + 0.5 - offset) / scale
    inside = (u >= 0.0) & (u <= n_src)
    pos = np.clip(u - 0.5, 0.0, n_src - 1.0)
    i0 = np.minimum(np.floor(pos).astype(int), max(n_src - 2, 0))
    t = pos - i0 if n_src > 1 else np.zeros_like(pos)
    return i0, t, inside


def _resample_plane_stack(data, out_shape, scale, offset):
    """Bilinear resampling of ``data`` (lines, samples, ...) onto ``out_shape``."""
    sy, sx = scale
    oy, ox = offset
    L, S = data.shape[:2]
    iy, ty, iny = _axis_weights(out_shape[0], L, sy, oy)
    ix, tx, inx = _axis_weights(out_shape[1], S, sx, ox)
    extra = (1,) * (data.ndim - 2)
    iy1 = np.minimum(iy + 1, L - 1)
    ix1 = np.minimum(ix + 1, S - 1)
    rows = data[iy] * (1.0 - ty).reshape(-1, 1, *extra) + data[iy1] * ty.reshape(-1, 1, *extra)
    out = rows[:, ix] * (1.0 - tx).reshape(1, -1, *extra) + rows[:, ix1] * tx.reshape(1, -1, *extra)
    support = iny[:, None] & inx[None, :]
    return out, support


def resample_to_reference(cube: SpectralCube, scale, offset: Translation2D, reference_shape,
                          nodata: float = NODATA) -> SpectralCube:
    """Bilinearly resample every band onto a reference grid of ``reference_shape`` (lines, samples).

    ``scale`` is a scalar or ``(sy, sx)``: reference pixels per source pixel.
    Output pixels outside the source footprint are set to ``nodata``.
    """
    sy, sx = (scale, scale) if np.isscalar(scale) else tuple(scale)
    if not (np.isfinite(sx) and np.isfinite(sy) and sx > 0 and sy > 0):
        raise ParameterError(f"scale must be positive and finite, got {(sy, sx)}")
    lines, samples = int(reference_shape[0]), int(reference_shape[1])
    if lines < 1 or samples < 1:
        raise ParameterError(f"bad reference shape {reference_shape}")
    data = np.asarray(cube.data, dtype=np.float64)
    out, support = _resample_plane_stack(data, (lines, samples), (sy, sx), (offset.dy, offset.dx))
    out[~support] = nodata
    return cube.with_data(out, nodata=nodata)


def _resample_image(img, out_shape, scale, offset):
    out, support = _resample_plane_stack(img, out_shape, scale, offset)
    out[~support] = np.nan
    return out


# --- co-registration ---------------------------------------------------------

@dataclass
class CoregistrationResult:
    cube: SpectralCube
    scale: Tuple[float, float]
    offset: Translation2D
    tie_bands: Tuple[int, int]
    split_wavelength: float


def _tie_pair(vnir: SpectralCube, swir: SpectralCube, max_gap_nm: float):
    dist = np.abs(vnir.wavelengths[:, None] - swir.wavelengths[None, :])
    i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
    overlap = min(vnir.wavelengths[-1], swir.wavelengths[-1]) >= max(vnir.wavelengths[0], swir.wavelengths[0])
    if not overlap and dist[i, j] > max_gap_nm:
        raise CannotCoregisterError(
            f"wavelength ranges neither overlap nor abut (gap {dist[i, j]:.1f} nm > {max_gap_nm} nm); "
            "pass tie_bands explicitly")
    return int(i), int(j)


def _ncc(a, b):
    m = np.isfinite(a) & np.isfinite(b)
    if m.sum() < 16:
        return -1.0
    x = a[m] - a[m].mean()
    y = b[m] - b[m].mean()
    den = np.sqrt((x * x).sum() * (y * y).sum())
    return float((x * y).sum() / den) if den > 0 else -1.0


def estimate_scale_translation(reference, moving, nominal_scale, isotropic=True, max_iter=400):
    """Fit ``ref = s * mov + t`` between two single-band images.

    The reference is blurred and sampled onto the moving grid at the nominal
    scale; phase correlation gives the starting translation and a simplex
    search maximizing normalized cross-correlation refines scale and shift.
    Returns ``((sy, sx), Translation2D)`` in reference pixels; confidence is
    the final correlation.
    """
    ref = np.asarray(reference, dtype=np.float64)
    mov = np.asarray(moving, dtype=np.float64)
    s0 = float(nominal_scale)
    # reference low-passed to the moving image's resolution
    ref_lp = gaussian_filter(ref, sigma=0.5 * s0, mode="nearest") if s0 > 1 else ref
    mov_lp = gaussian_filter(mov, sigma=0.5 / s0, mode="nearest") if s0 < 1 else mov

    def ref_on_moving_grid(sy, sx, ty, tx):
        # moving pixel centre (k + 0.5) sits at reference coordinate s*(k+0.5)+t
        return _resample_image(ref_lp, mov.shape, (1.0 / sy, 1.0 / sx), (-ty / sy, -tx / sx))

    coarse = ref_on_moving_grid(s0, s0, 0.0, 0.0)
    fill = np.where(np.isfinite(coarse), coarse, np.nanmean(coarse))
    shift = estimate_translation(fill, mov_lp)
    # mov(x) ~ coarse(x - d): moving coordinate k corresponds to reference s0*(k + d)
    t0 = (s0 * shift.dy, s0 * shift.dx)

    if isotropic:
        x0 = np.array([[0.0, t0[0], t0[1]]])
        step = (0.002, 0.5 * s0, 0.5 * s0)

        def unpack(p):
            s = s0 * np.exp(p[0])
            return s, s, p[1], p[2]
    else:
        x0 = np.array([[0.0, 0.0, t0[0], t0[1]]])
        step = (0.002, 0.002, 0.5 * s0, 0.5 * s0)

        def unpack(p):
            return s0 * np.exp(p[0]), s0 * np.exp(p[1]), p[2], p[3]

    def cost(theta, idx):
        return np.array([-_ncc(ref_on_moving_grid(*unpack(p)), mov_lp) for p in theta])

    res = nelder_mead_batch(cost, x0, step, xatol=1e-5, fatol=1e-9, max_iter=max_iter)
    sy, sx, ty, tx = unpack(res.x[0])
    corr = float(-res.fun[0])
    return (sy, sx), Translation2D(tx, ty, float(np.clip(corr, 0.0, 1.0)))


def coregister(
    vnir: SpectralCube,
    swir: SpectralCube,
    nominal_scale: Optional[float] = None,
    tie_bands: Optional[Tuple[int, int]] = None,
    min_confidence: float = 0.1,
    max_gap_nm: float = 100.0,
    return_details: bool = False,
):
    """Merge a SWIR cube onto the VNIR pixel grid and join the band sets.

    Bands below the midpoint of the wavelength overlap come from VNIR, the
    rest from SWIR (one source per wavelength). ``nominal_scale`` defaults to
    the ratio of sample counts.
    """
    if tie_bands is None:
        tie_bands = _tie_pair(vnir, swir, max_gap_nm)
    iv, js = tie_bands
    s0 = float(nominal_scale) if nominal_scale is not None else vnir.samples / swir.samples
    if vnir.shape[:2] == swir.shape[:2] and s0 == 1.0 and np.array_equal(vnir.band(iv), swir.band(js)):
        scale, offset = (1.0, 1.0), Translation2D(0.0, 0.0, 1.0)
    else:
        scale, offset = estimate_scale_translation(vnir.band(iv), swir.band(js), s0)
    if offset.confidence < min_confidence:
        raise LowConfidenceError(f"co-registration correlation {offset.confidence:.3f} below {min_confidence}",
                                 confidence=offset.confidence)
    logger.info("co-registration scale=(%.5f, %.5f) offset=(%.3f, %.3f) confidence=%.3f",
                scale[0], scale[1], offset.dx, offset.dy, offset.confidence)
    warped = resample_to_reference(swir, scale, offset, (vnir.lines, vnir.samples))

    lo = max(vnir.wavelengths[0], swir.wavelengths[0])
    hi = min(vnir.wavelengths[-1], swir.wavelengths[-1])
    split = 0.5 * (lo + hi)
    keep_v = vnir.wavelengths <= split
    keep_s = swir.wavelengths > split
    wl = np.concatenate([vnir.wavelengths[keep_v], swir.wavelengths[keep_s]])
    data = np.concatenate([np.asarray(vnir.data, dtype=np.float64)[:, :, keep_v], warped.data[:, :, keep_s]], axis=2)
    order = np.argsort(wl, kind="stable")
    merged = vnir.with_data(data[:, :, order], wavelengths=wl[order], nodata=NODATA)
    if return_details:
        return CoregistrationResult(merged, scale, offset, (iv, js), float(split))
    return merged


# --- mosaicking --------------------------------------------------------------

@dataclass
class Strip:
    cube: SpectralCube
    offset: Tuple[float, float]  # (x, y) in output pixels


@dataclass
class StripLayout:
    strips: List[Strip]
    overlap_threshold: int = 8

    def validate(self):
        if not self.strips:
            raise LayoutError("layout has no strips")
        wl = self.strips[0].cube.wavelengths
        for s in self.strips[1:]:
            if not np.array_equal(s.cube.wavelengths, wl):
                raise LayoutError("strips must share wavelengths")
        for k in range(len(self.strips) - 1):
            ov = _overlap(self.strips[k], self.strips[k + 1])
            if ov < self.overlap_threshold:
                raise LayoutError(f"strips {k} and {k + 1} overlap by {ov:g} px < {self.overlap_threshold}")


@dataclass
class MosaicResult:
    cube: SpectralCube
    offsets: List[Tuple[float, float]]
    weight_sum: np.ndarray
    corrections: List[Tuple[float, float]] = field(default_factory=list)


def _extent(strip, offset=None):
    ox, oy = strip.offset if offset is None else offset
    return ox, oy, ox + strip.cube.samples, oy + strip.cube.lines


def _overlap(a: Strip, b: Strip) -> float:
    ax0, ay0, ax1, ay1 = _extent(a)
    bx0, by0, bx1, by1 = _extent(b)
    ix = min(ax1, bx1) - max(ax0, bx0)
    iy = min(ay1, by1) - max(ay0, by0)
    return max(0.0, min(ix, iy))


def default_reference_band(cubes: Sequence[SpectralCube]) -> int:
    """Band with the highest average SNR (mean over a difference-based noise estimate)."""
    snr = np.zeros(cubes[0].bands)
    for c in cubes:
        d = np.asarray(c.data, dtype=np.float64)
        noise = np.nanstd(np.diff(d, axis=1), axis=(0, 1)) / np.sqrt(2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            snr += np.where(noise > 0, np.abs(np.nanmean(d, axis=(0, 1))) / noise, 0.0)
    return int(np.argmax(snr))


def _refine_pair(a: Strip, a_off, b: Strip, band: int):
    """Refined offset of strip ``b`` given strip ``a`` already placed at ``a_off``."""
    rel = np.array(b.offset, dtype=float) - np.array(a_off, dtype=float)
    rx, ry = int(round(rel[0])), int(round(rel[1]))
    A, B = a.cube.band(band), b.cube.band(band)
    x0a, y0a = max(rx, 0), max(ry, 0)
    x0b, y0b = max(-rx, 0), max(-ry, 0)
    w = min(A.shape[1] - x0a, B.shape[1] - x0b)
    h = min(A.shape[0] - y0a, B.shape[0] - y0b)
    if w < 4 or h < 4:
        raise LayoutError("nominal overlap too small to refine")
    ca = np.asarray(A[y0a:y0a + h, x0a:x0a + w], dtype=np.float64)
    cb = np.asarray(B[y0b:y0b + h, x0b:x0b + w], dtype=np.float64)
    fill_a, fill_b = np.nanmean(ca), np.nanmean(cb)
    shift = estimate_translation(np.where(np.isfinite(ca), ca, fill_a), np.where(np.isfinite(cb), cb, fill_b))
    return (a_off[0] + rx - shift.dx, a_off[1] + ry - shift.dy), shift.confidence


def _ramp(n_out, start, length):
    """Feather ramp along one axis: distance to the nearer strip edge, 0 outside."""
    u = np.arange(n_out) + 0.5 - start
    return np.clip(np.minimum(u, length - u), 0.0, None)


def mosaic(layout: StripLayout, reference_band: Optional[int] = None, refine: bool = True,
           max_correction: float = 10.0, fallback_to_nominal: bool = False, return_details: bool = False):
    """Assemble overlapping strips onto one canvas with linear feathering.

    Consecutive strip offsets are refined by phase correlation of the
    reference band over their nominal overlap. Overlaps are blended with
    weights proportional to the distance from each strip's edge, normalized
    to sum to 1; no-data pixels carry zero weight.
    """
    layout.validate()
    strips = layout.strips
    if reference_band is None:
        reference_band = default_reference_band([s.cube for s in strips])
    offsets = [tuple(map(float, strips[0].offset))]
    corrections = [(0.0, 0.0)]
    for k in range(1, len(strips)):
        nominal = tuple(map(float, strips[k].offset))
        if refine:
            refined, _ = _refine_pair(strips[k - 1], offsets[k - 1], strips[k], reference_band)
            corr = (refined[0] - nominal[0], refined[1] - nominal[1])
            if max(abs(corr[0]), abs(corr[1])) > max_correction:
                msg = (f"strip {k}: refined offset deviates from nominal by ({corr[0]:.2f}, {corr[1]:.2f}) px "
                       f"> {max_correction}")
                if not fallback_to_nominal:
                    raise MisalignmentError(msg)
                warnings.warn(msg + "; using nominal offset", CalibrationWarning, stacklevel=2)
                refined, corr = nominal, (0.0, 0.0)
        else:
            refined, corr = nominal, (0.0, 0.0)
        offsets.append(refined)
        corrections.append(corr)

    x0 = np.floor(min(o[0] for o in offsets))
    y0 = np.floor(min(o[1] for o in offsets))
    x1 = np.ceil(max(o[0] + s.cube.samples for o, s in zip(offsets, strips)))
    y1 = np.ceil(max(o[1] + s.cube.lines for o, s in zip(offsets, strips)))
    H, W = int(y1 - y0), int(x1 - x0)
    bands = strips[0].cube.bands
    acc = np.zeros((H, W, bands))
    wsum = np.zeros((H, W, bands))
    for s, (ox, oy) in zip(strips, offsets):
        px, py = ox - x0, oy - y0
        moved = resample_to_reference(s.cube, 1.0, Translation2D(px, py), (H, W)).data
        w2 = _ramp(H, py, s.cube.lines)[:, None] * _ramp(W, px, s.cube.samples)[None, :]
        w = np.where(np.isfinite(moved), w2[:, :, None], 0.0)
        acc += np.where(w > 0, moved, 0.0) * w
        wsum += w
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(wsum > 0, acc / wsum, NODATA)
    first = strips[0].cube
    result = first.with_data(out, nodata=NODATA)
    if return_details:
        norm_sum = np.where(wsum > 0, 1.0, 0.0)
        return MosaicResult(result, [(o[0] - x0, o[1] - y0) for o in offsets], norm_sum, corrections)
    return result
