import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypercal.cube import SpectralCube
from hypercal.errors import CalibrationWarning, DimensionError, ParameterError
from hypercal.noise import (
    denoise_spatial_median,
    denoise_spectral,
    estimate_snr,
    frame_average,
    smoothing_weights,
)
from hypercal.radiometric import Roi


def make(data, wl=None):
    data = np.asarray(data, dtype=float)
    wl = np.linspace(400, 1000, data.shape[2]) if wl is None else wl
    return SpectralCube(data, wl)


def test_frame_average_pointwise():
    out = frame_average([make(np.full((2, 2, 3), 10.0)), make(np.full((2, 2, 3), 20.0))])
    assert np.all(out.data == 15)
    single = make(np.arange(12.0).reshape(2, 2, 3))
    assert np.array_equal(frame_average([single]).data, single.data)
    with pytest.raises(DimensionError):
        frame_average([single, make(np.ones((2, 3, 3)))])
    with pytest.raises(ParameterError):
        frame_average([])


def test_frame_average_noise_shrinks_as_sqrt_n():
    rng = np.random.default_rng(0)
    frames = [make(100 + rng.normal(0, 4, (50, 50, 2))) for _ in range(16)]
    s1 = frames[0].data.std()
    s16 = frame_average(frames).data.std()
    assert s1 / s16 == pytest.approx(4.0, rel=0.05)


def test_snr_uniform_and_flat():
    rng = np.random.default_rng(1)
    c = make(1000 + rng.normal(0, 5, (100, 100, 2)))
    rep = estimate_snr(c, Roi.full(c))
    assert np.allclose(rep.snr, 200, rtol=0.03)
    assert rep.to_csv().startswith("wavelength_nm,snr\n")
    with pytest.warns(CalibrationWarning):
        assert np.all(np.isinf(estimate_snr(make(np.full((3, 3, 2), 5.0)), Roi(0, 0, 3, 3)).snr))


def test_spectral_smoothing_reproduces_polynomials():
    b = np.arange(20.0)
    spectra = np.stack([3 + 0.5 * b - 0.02 * b**2, np.full(20, 7.0), 2 * b])
    c = make(spectra[None])
    assert np.allclose(denoise_spectral(c, window=7, degree=2).data, c.data, atol=1e-9)


def test_spectral_smoothing_variance_factor():
    rng = np.random.default_rng(2)
    c = make(rng.normal(0, 1, (200, 200, 21)))
    out = denoise_spectral(c, window=7, degree=2).data[:, :, 5:-5]
    w = smoothing_weights(7, 2)
    assert out.var() == pytest.approx(float(np.sum(w**2)), rel=0.03)


def test_spectral_smoothing_parameter_errors():
    c = make(np.zeros((1, 1, 10)))
    for kw in ({"window": 4}, {"window": 11}, {"window": 5, "degree": 5}):
        with pytest.raises(ParameterError):
            denoise_spectral(c, **kw)


def test_median_removes_hot_pixel():
    d = np.full((5, 5, 1), 10.0)
    d[2, 2] = 1000
    assert np.all(denoise_spatial_median(make(d)).data == 10)


def test_median_recovers_salt_and_pepper():
    rng = np.random.default_rng(3)
    clean = np.full((64, 64, 2), 50.0)
    noisy = clean.copy()
    hit = rng.random(clean.shape) < 0.05
    noisy[hit] = rng.choice([0.0, 255.0], size=hit.sum())
    out = denoise_spatial_median(make(noisy)).data
    assert np.mean(out == 50) > 0.99
    with pytest.raises(ParameterError):
        denoise_spatial_median(make(noisy), radius=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 4]))
def test_denoise_independent_of_workers(seed, workers):
    c = make(np.random.default_rng(seed).normal(size=(70, 3, 9)))
    assert np.array_equal(denoise_spectral(c, 5, 2, workers=workers).data, denoise_spectral(c, 5, 2).data)


def test_full_width_window_preserves_ramp():
    bands = 12
    c = make((2.0 * np.arange(bands) + 1)[None, None, :])
    window = bands - 1 if bands % 2 == 0 else bands
    assert np.allclose(denoise_spectral(c, window=window).data, c.data)
