"""Forward simulator of a push-broom acquisition with known ground truth.

The raw model per (line, sample, band) is

    DN = quantize(gain * illum * efficiency * integration * R + stray + dark + noise)

where ``R`` is the scene reflectance after optional across-track (sensor
model) and along-track (scan speed) distortion. Noise streams are seeded
per band from ``(seed, stream, band)`` so output is identical for any
worker count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._parallel import map_blocks
from .certified import CertifiedCurve, resample_curve
from .cube import SpectralCube, Units
from .errors import DimensionError, ParameterError, RangeError
from .geometric import SensorModel, _interp_axis
from .radiometric import Roi

logger = logging.getLogger(__name__)

# stream ids keep scene, dark and panel noise independent under one seed
STREAM_SCENE = 0
STREAM_DARK = 1
STREAM_PANEL = 2


def band_rng(seed: int, stream: int, band: int) -> np.random.Generator:
    """Counter-based generator for one (seed, stream, band) triple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), int(band)])))


@dataclass(eq=False)
class SceneSpec:
    """Ground-truth reflectance ``(lines, samples, bands)`` on a wavelength grid."""

    reflectance: np.ndarray
    wavelengths: np.ndarray
    name: str = "scene"

    def __post_init__(self):
        r = np.asarray(self.reflectance, dtype=np.float64)
        if r.ndim != 3:
            raise DimensionError(f"reflectance must be 3-D, got {r.shape}")
        if np.any(r < 0) or np.any(r > 1.1) or not np.all(np.isfinite(r)):
            raise RangeError("scene reflectance must lie in [0, 1.1]")
        self.reflectance = r
        self.wavelengths = np.asarray(self.wavelengths, dtype=float)
        if self.wavelengths.size != r.shape[2]:
            raise DimensionError("one wavelength per band required")

    @property
    def shape(self):
        return self.reflectance.shape

    def cube(self) -> SpectralCube:
        return SpectralCube(self.reflectance, self.wavelengths, units=Units.REFLECTANCE_FACTOR)


@dataclass(eq=False)
class AcquisitionModel:
    """Detector and illumination parameters of a simulated scan.

    ``integration`` is the noise-free count produced by a perfect reflector
    at unit gain, illumination and efficiency. ``read_noise`` is the
    Gaussian sigma in counts; ``shot_noise`` adds Gaussian noise with
    variance ``shot_noise * signal``. ``stray_light`` is an additive count
    offset reaching the detector only when the shutter is open.
    """

    samples: int
    bands: int
    dark: Optional[np.ndarray] = None          # (samples, bands)
    gain: Optional[np.ndarray] = None          # (samples, bands)
    illumination: Optional[np.ndarray] = None  # (samples,)
    efficiency: Optional[np.ndarray] = None    # (bands,)
    integration: float = 30000.0
    read_noise: float = 0.0
    shot_noise: float = 0.0
    stray_light: float = 0.0
    code_max: float = 65535.0
    quantize: bool = True
    sensor_model: Optional[SensorModel] = None
    scan_speed: float = 1.0
    seed: int = 0

    def __post_init__(self):
        S, B = self.samples, self.bands
        self.dark = np.zeros((S, B)) if self.dark is None else np.asarray(self.dark, dtype=float)
        self.gain = np.ones((S, B)) if self.gain is None else np.asarray(self.gain, dtype=float)
        self.illumination = np.ones(S) if self.illumination is None else np.asarray(self.illumination, dtype=float)
        self.efficiency = np.ones(B) if self.efficiency is None else np.asarray(self.efficiency, dtype=float)
        checks = [(self.dark, (S, B), "dark"), (self.gain, (S, B), "gain"),
                  (self.illumination, (S,), "illumination"), (self.efficiency, (B,), "efficiency")]
        for arr, shape, name in checks:
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
        if np.any(self.gain <= 0) or np.any(self.illumination <= 0) or np.any(self.efficiency <= 0):
            raise ParameterError("gain, illumination and efficiency must be positive")
        if self.read_noise < 0 or self.shot_noise < 0:
            raise ParameterError("noise parameters must be non-negative")
        if self.sensor_model is not None and len(self.sensor_model) != S:
            raise DimensionError("sensor model length must equal samples")
        if self.scan_speed <= 0:
            raise ParameterError("scan_speed must be positive")

    @property
    def response(self) -> np.ndarray:
        """Counts per unit reflectance, ``(samples, bands)``."""
        return self.gain * self.illumination[:, None] * self.efficiency[None, :] * self.integration

    @property
    def noiseless(self) -> bool:
        return self.read_noise == 0 and self.shot_noise == 0


@dataclass(eq=False)
class AcquisitionTruth:
    """Everything needed to check a calibration against the simulation."""

    reflectance: np.ndarray      # scene as presented to the detector (after distortion)
    signal: np.ndarray           # noise-free counts before clipping
    clipped: np.ndarray          # bool, counts clipped at code_max
    model: AcquisitionModel


def distort(reflectance: np.ndarray, model: AcquisitionModel) -> np.ndarray:
    """Apply sensor-model and scan-speed distortion to a reflectance cube.

    Scene samples are a uniform grid over the sensor model's physical extent;
    detector pixel ``i`` sees the scene at the model's ``i``-th centre. A
    scan speed ``f`` spaces lines ``f`` scene lines apart.
    """
    r = reflectance
    if model.sensor_model is not None:
        sm = model.sensor_model
        pitch = sm.extent / r.shape[1]
        src = (np.arange(r.shape[1]) + 0.5) * pitch
        r = _interp_axis(r, src, sm.centers, axis=1)
    if model.scan_speed != 1.0:
        n_out = int(round(r.shape[0] / model.scan_speed))
        if n_out < 2:
            raise ParameterError("scan speed leaves fewer than 2 lines")
        src = np.arange(r.shape[0]) + 0.5
        dst = (np.arange(n_out) + 0.5) * model.scan_speed
        r = _interp_axis(r, src, dst, axis=0)
    return r


def _finish(signal: np.ndarray, model: AcquisitionModel, stream: int, workers: int):
    """Add per-band noise, clip and quantize; returns (counts, clipped)."""
    out = np.empty(signal.shape, dtype=np.float64)

    def run(sl):
        for b in range(sl.start, sl.stop):
            plane = signal[:, :, b]
            if not model.noiseless:
                rng = band_rng(model.seed, stream, b)
                z = rng.standard_normal(plane.shape)
                sigma = np.sqrt(model.read_noise**2 + model.shot_noise * np.clip(plane, 0.0, None))
                plane = plane + sigma * z
            out[:, :, b] = plane

    map_blocks(run, signal.shape[2], 8, workers)
    clipped = out >= model.code_max
    if model.quantize:
        out = np.clip(np.rint(out), 0.0, model.code_max)
        dtype = np.uint16 if model.code_max <= 65535 else np.uint32
        out = out.astype(dtype)
    else:
        out = np.minimum(out, model.code_max)
    return out, clipped


def simulate_acquisition(scene: SceneSpec, model: AcquisitionModel, stream: int = STREAM_SCENE,
                         workers: int = 1) -> Tuple[SpectralCube, AcquisitionTruth]:
    """Render raw counts for ``scene`` under ``model``."""
    if scene.shape[1:] != (model.samples, model.bands):
        raise ParameterError(f"scene (samples, bands) {scene.shape[1:]} does not match model "
                             f"{(model.samples, model.bands)}")
    r = distort(scene.reflectance, model)
    signal = model.response[None] * r + model.stray_light + model.dark[None]
    counts, clipped = _finish(signal, model, stream, workers)
    cube = SpectralCube(counts, scene.wavelengths, code_max=model.code_max, units=Units.RAW_COUNTS,
                        metadata={"simulated": "true"})
    return cube, AcquisitionTruth(r, signal, clipped, model)


def simulate_dark(model: AcquisitionModel, lines: int, wavelengths, workers: int = 1) -> SpectralCube:
    """Shutter-closed scan: dark offsets plus read noise, no scene or stray light."""
    signal = np.broadcast_to(model.dark[None], (lines, model.samples, model.bands))
    counts, _ = _finish(np.array(signal), model, STREAM_DARK, workers)
    return SpectralCube(counts, wavelengths, code_max=model.code_max, units=Units.RAW_COUNTS,
                        metadata={"simulated": "dark"})


def contaminate_panel(samples, dirt_fraction: float, dirt_level: float, seed: int = 0):
    """Dim a seeded random subset of panel samples to ``dirt_level * value``.

    Along axis 0, exactly ``round(dirt_fraction * n)`` entries of every column
    are replaced, mimicking dirt and scratches on a reference standard.
    """
    if not 0 <= dirt_fraction <= 0.5:
        raise ParameterError("dirt_fraction must be in [0, 0.5]")
    if not 0 < dirt_level < 1:
        raise ParameterError("dirt_level must be in (0, 1)")
    x = np.array(samples, dtype=np.float64)
    n = x.shape[0]
    k = int(round(dirt_fraction * n))
    if k == 0:
        return x
    cols = x.reshape(n, -1)
    rng = np.random.default_rng(seed)
    for j in range(cols.shape[1]):
        idx = rng.choice(n, size=k, replace=False)
        cols[idx, j] *= dirt_level
    return cols.reshape(x.shape)


# --- model components --------------------------------------------------------

def illumination_profile(samples: int, low: float = 0.75) -> np.ndarray:
    """Uneven across-track lamp profile: off-centre hot spot with a slight ripple, range ``[low, 1]``."""
    u = (np.arange(samples) + 0.5) / samples
    p = 1.0 - ((u - 0.42) / 0.58) ** 2 + 0.06 * np.sin(2 * np.pi * 2.5 * u) * u
    p = (p - p.min()) / (p.max() - p.min())
    return low + (1.0 - low) * p


def gain_striping(samples: int, bands: int, amplitude: float = 0.1, seed: int = 0) -> np.ndarray:
    """Per-pixel sensitivity in ``[1 - amplitude, 1 + amplitude]``: column striping with weak band dependence."""
    rng = np.random.default_rng([seed, 11])
    col = rng.uniform(-1.0, 1.0, samples)
    tilt = rng.uniform(-1.0, 1.0, samples)
    t = np.linspace(-1.0, 1.0, bands)
    g = 0.8 * col[:, None] + 0.2 * tilt[:, None] * t[None, :]
    return 1.0 + amplitude * g


def dark_map(samples: int, bands: int, level: float = 400.0, spread: float = 0.25, seed: int = 0) -> np.ndarray:
    """Fixed-pattern dark offsets around ``level`` counts."""
    rng = np.random.default_rng([seed, 13])
    pattern = rng.uniform(-1.0, 1.0, (samples, bands)) + 0.5 * rng.uniform(-1.0, 1.0, samples)[:, None]
    return np.clip(level * (1.0 + spread * pattern / 1.5), 0.0, None)


def efficiency_profile(wavelengths, low: float = 0.6, high: float = 1.0) -> np.ndarray:
    """Smooth single-peaked relative efficiency in ``[low, high]`` across the band range."""
    wl = np.asarray(wavelengths, dtype=float)
    u = (wl - wl[0]) / max(wl[-1] - wl[0], 1e-12)
    bell = np.exp(-0.5 * ((u - 0.35) / 0.3) ** 2)
    bell = (bell - bell.min()) / max(bell.max() - bell.min(), 1e-12)
    return low + (high - low) * bell


# --- scene generators --------------------------------------------------------

def pigment_scene(lines: int, samples: int, wavelengths, n_pigments: int = 4, seed: int = 0,
                  lo: float = 0.05, hi: float = 0.9) -> SceneSpec:
    """Smoothly varying mixture of pigment-like spectra."""
    rng = np.random.default_rng([seed, 17])
    wl = np.asarray(wavelengths, dtype=float)
    u = (wl - wl[0]) / max(wl[-1] - wl[0], 1e-12)
    spectra = []
    for _ in range(n_pigments):
        edge = rng.uniform(0.1, 0.9)
        width = rng.uniform(0.03, 0.15)
        a, b = np.sort(rng.uniform(lo, hi, 2))
        s = a + (b - a) / (1.0 + np.exp(-(u - edge) / width))
        spectra.append(s if rng.random() < 0.5 else s[::-1])
    spectra = np.array(spectra)  # (P, B)
    y = np.linspace(0.0, 1.0, lines)[:, None]
    x = np.linspace(0.0, 1.0, samples)[None, :]
    weights = []
    for _ in range(n_pigments):
        fx, fy = rng.uniform(0.5, 3.0, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        weights.append(1.0 + 0.9 * np.sin(2 * np.pi * fx * x + px) * np.cos(2 * np.pi * fy * y + py))
    w = np.array(weights)
    w /= w.sum(axis=0, keepdims=True)
    refl = np.einsum("pls,pb->lsb", w, spectra)
    return SceneSpec(refl, wl, "pigments")


def textured_field(x, y, seed: int = 0, n_blobs: int = 200, extent: float = 1600.0) -> np.ndarray:
    """Smooth random texture in ``[0, 1]`` on the grid spanned by 1-D coordinates ``x`` and ``y``.

    Returns an array of shape ``(len(y), len(x))``. The texture is continuous
    in physical coordinates, so one scene can be rendered on grids of
    different pitch and origin.
    """
    rng = np.random.default_rng([seed, 23])
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    cx = rng.uniform(-0.05, 1.05, n_blobs) * extent
    cy = rng.uniform(-0.05, 1.05, n_blobs) * extent
    r = np.exp(rng.uniform(np.log(0.004), np.log(0.05), n_blobs)) * extent  # detail at many scales
    amp = rng.uniform(-1.0, 1.0, n_blobs)
    gx = np.exp(-0.5 * ((x[None, :] - cx[:, None]) / r[:, None]) ** 2)  # (K, nx)
    gy = np.exp(-0.5 * ((y[None, :] - cy[:, None]) / r[:, None]) ** 2)  # (K, ny)
    return 0.5 + 0.5 * np.tanh((gy * amp[:, None]).T @ gx)


def render_textured_scene(lines: int, samples: int, wavelengths, pixel: float = 1.0,
                          origin: Tuple[float, float] = (0.0, 0.0), seed: int = 0, supersample: int = 3,
                          extent: float = 1600.0) -> SceneSpec:
    """Area-averaged render of a two-texture spectral scene.

    Pixel ``(i, j)`` covers ``[ox + j*pixel, ox + (j+1)*pixel]`` across and the
    matching interval along track, in physical units. Rendering one scene with
    ``pixel=1`` and again with ``pixel=p, origin=(ox, oy)`` gives a pair related
    by scale ``p`` and offset ``(ox, oy)``.
    """
    wl = np.asarray(wavelengths, dtype=float)
    k = int(supersample)
    sub = (np.arange(k) + 0.5) / k
    xs = origin[0] + (np.arange(samples)[:, None] + sub[None, :]).ravel() * pixel
    ys = origin[1] + (np.arange(lines)[:, None] + sub[None, :]).ravel() * pixel
    fields = []
    for s in (seed, seed + 1000):
        f = textured_field(xs, ys, s, extent=extent)
        fields.append(f.reshape(lines, k, samples, k).mean(axis=(1, 3)))
    # mix depends on absolute wavelength so separately rendered band sets agree
    mix = 0.5 + 0.4 * np.cos(np.pi * (wl - 400.0) / 2100.0)
    refl = 0.05 + 0.85 * (fields[0][:, :, None] * mix + fields[1][:, :, None] * (1.0 - mix))
    return SceneSpec(refl, wl, "textured")


def uniform_scene(lines: int, samples: int, wavelengths, reflectance) -> SceneSpec:
    """Spatially uniform target with a scalar or per-band reflectance."""
    wl = np.asarray(wavelengths, dtype=float)
    r = np.broadcast_to(np.asarray(reflectance, dtype=float), wl.shape)
    return SceneSpec(np.broadcast_to(r, (lines, samples, wl.size)).copy(), wl, "uniform")


def certified_panel_scene(lines: int, samples: int, wavelengths, curve: CertifiedCurve) -> SceneSpec:
    """Full-field reference standard with the curve's certified reflectance."""
    return uniform_scene(lines, samples, wavelengths, resample_curve(curve, wavelengths))


def panel_stripes(lines_per_panel: int, samples: int, wavelengths, curves: Sequence[CertifiedCurve],
                  gap: int = 0) -> Tuple[SceneSpec, List[Roi]]:
    """Stack of full-width panels along Y, one per curve; returns the scene and each panel's ROI."""
    wl = np.asarray(wavelengths, dtype=float)
    blocks, rois, line0 = [], [], 0
    for c in curves:
        r = resample_curve(c, wl)
        blocks.append(np.broadcast_to(r, (lines_per_panel, samples, wl.size)))
        rois.append(Roi(0, line0, samples, lines_per_panel))
        line0 += lines_per_panel
        if gap:
            blocks.append(np.zeros((gap, samples, wl.size)))
            line0 += gap
    return SceneSpec(np.concatenate(blocks, axis=0), wl, "panels"), rois


def ruler_scene(lines: int, samples: int, wavelengths, period: float = 40.0, width: float = 2.0,
                bright: float = 0.8, dark: float = 0.1) -> Tuple[SceneSpec, np.ndarray]:
    """Dark ruler ticks every ``period`` samples on a bright ground; returns the scene and tick centres."""
    wl = np.asarray(wavelengths, dtype=float)
    ticks = np.arange(period / 2.0, samples, period)
    x = np.arange(samples) + 0.5
    depth = np.zeros(samples)
    for t in ticks:
        depth = np.maximum(depth, np.exp(-0.5 * ((x - t) / width) ** 2))
    row = bright - (bright - dark) * depth
    refl = np.broadcast_to(row[None, :, None], (lines, samples, wl.size)).copy()
    return SceneSpec(refl, wl, "ruler"), ticks


def square_scene(lines: int, samples: int, wavelengths, side: float, bright: float = 0.8,
                 dark: float = 0.1) -> SceneSpec:
    """Dark square of ``side`` pixels centred on a bright ground (anti-aliased edges)."""
    wl = np.asarray(wavelengths, dtype=float)

    def cover(n):
        c = n / 2.0
        a, b = c - side / 2.0, c + side / 2.0
        e = np.arange(n)
        return np.clip(np.minimum(e + 1, b) - np.maximum(e, a), 0.0, 1.0)

    mask = cover(lines)[:, None] * cover(samples)[None, :]
    img = bright - (bright - dark) * mask
    return SceneSpec(np.broadcast_to(img[:, :, None], (lines, samples, wl.size)).copy(), wl, "square")


def measure_square(image, threshold: Optional[float] = None) -> Tuple[float, float]:
    """Width and height of a dark square as area-weighted extents along each axis."""
    a = np.asarray(image, dtype=np.float64)
    if threshold is None:
        lo, hi = np.percentile(a, [1, 99])
    else:
        lo, hi = threshold
    cover = np.clip((hi - a) / (hi - lo), 0.0, 1.0)
    width = cover.sum(axis=1).max()
    height = cover.sum(axis=0).max()
    return float(width), float(height)


def standard_model(samples: int, wavelengths, snr: float = 200.0, seed: int = 0, striping: float = 0.1,
                   peak_fraction: float = 0.8, code_max: float = 65535.0, **overrides) -> AcquisitionModel:
    """Acquisition with dark map, gain striping, uneven illumination and read noise.

    Integration is chosen so a perfect reflector peaks at ``peak_fraction``
    of full scale; read noise is ``peak / snr``.
    """
    wl = np.asarray(wavelengths, dtype=float)
    B = wl.size
    dark = dark_map(samples, B, level=0.01 * code_max, seed=seed)
    gain = gain_striping(samples, B, striping, seed=seed)
    illum = illumination_profile(samples)
    eff = efficiency_profile(wl)
    peak_resp = float((gain * illum[:, None] * eff[None, :]).max())
    available = peak_fraction * code_max - dark.max()
    integration = available / peak_resp
    sigma = (peak_fraction * code_max - 0.01 * code_max) / snr if snr else 0.0
    kw = dict(samples=samples, bands=B, dark=dark, gain=gain, illumination=illum, efficiency=eff,
              integration=integration, read_noise=sigma, code_max=code_max, seed=seed)
    kw.update(overrides)
    return AcquisitionModel(**kw)
