import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypercal import synth
from hypercal.errors import DimensionError, ParameterError, RangeError
from hypercal.fixtures import certified_fixture

WL = np.linspace(450, 950, 6)


def test_zero_noise_matches_analytic_model():
    eff = synth.efficiency_profile(WL)
    dark = np.full((10, 6), 37.0)
    m = synth.AcquisitionModel(10, 6, dark=dark, efficiency=eff, integration=1000.0, quantize=False)
    scene = synth.pigment_scene(5, 10, WL, seed=1)
    raw, truth = synth.simulate_acquisition(scene, m)
    assert np.allclose(raw.data, eff * 1000.0 * scene.reflectance + 37.0)
    assert not truth.clipped.any()


def test_fixed_seed_is_byte_identical_for_any_worker_count():
    m = synth.standard_model(32, WL, seed=5)
    scene = synth.pigment_scene(40, 32, WL, seed=5)
    a, _ = synth.simulate_acquisition(scene, m)
    b, _ = synth.simulate_acquisition(scene, m, workers=4)
    assert a.data.dtype == np.uint16 and a.data.tobytes() == b.data.tobytes()
    c, _ = synth.simulate_acquisition(scene, synth.standard_model(32, WL, seed=6))
    assert a.data.tobytes() != c.data.tobytes()


def test_noise_matches_declared_sigma():
    m = synth.AcquisitionModel(100, 1, integration=1000.0, read_noise=12.0, quantize=False)
    raw, truth = synth.simulate_acquisition(synth.uniform_scene(1000, 100, [600.0], 0.5), m)
    resid = raw.data - truth.signal
    assert resid.size == 100_000
    assert resid.std() == pytest.approx(12.0, rel=0.05)


def test_shot_noise_scales_with_signal():
    m = synth.AcquisitionModel(100, 1, integration=10000.0, shot_noise=1.0, quantize=False)
    raw, truth = synth.simulate_acquisition(synth.uniform_scene(500, 100, [600.0], 0.4), m)
    assert (raw.data - truth.signal).var() == pytest.approx(4000.0, rel=0.05)


def test_clipping_flags():
    m = synth.AcquisitionModel(4, 1, integration=5000.0, code_max=4095)
    raw, truth = synth.simulate_acquisition(synth.uniform_scene(2, 4, [600.0], 1.0), m)
    assert truth.clipped.all() and np.all(raw.data == 4095)


def test_panel_profile_follows_illumination():
    illum = synth.illumination_profile(200)
    m = synth.AcquisitionModel(200, 1, illumination=illum, integration=20000.0, quantize=False)
    panel = synth.certified_panel_scene(3, 200, [600.0], certified_fixture("certified_50a"))
    raw, _ = synth.simulate_acquisition(panel, m)
    row = raw.data[0, :, 0]
    assert np.allclose(row / row.max(), illum / illum.max())
    assert row.min() / row.max() < 0.8


def test_model_validation():
    with pytest.raises(DimensionError):
        synth.AcquisitionModel(4, 2, gain=np.ones((3, 2)))
    with pytest.raises(ParameterError):
        synth.AcquisitionModel(4, 2, read_noise=-1.0)
    with pytest.raises(ParameterError):
        synth.simulate_acquisition(synth.uniform_scene(2, 5, WL[:2], 0.5), synth.AcquisitionModel(4, 2))
    with pytest.raises(RangeError):
        synth.SceneSpec(np.full((1, 1, 1), 1.5), [500.0])


def test_contaminate_panel_examples():
    x = np.full((200, 3), 100.0)
    assert np.array_equal(synth.contaminate_panel(x, 0.0, 0.6), x)
    dirty = synth.contaminate_panel(x, 0.05, 0.6, seed=1)
    assert np.all((dirty == 60).sum(axis=0) == 10)
    assert dirty.mean() == pytest.approx(98.0)
    assert np.all((synth.contaminate_panel(x, 0.5, 0.6) == 60).sum(axis=0) == 100)
    with pytest.raises(ParameterError):
        synth.contaminate_panel(x, 0.6, 0.6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_contamination_only_dims(fraction, level, seed):
    x = np.random.default_rng(seed).uniform(1, 100, (50, 4))
    y = synth.contaminate_panel(x, fraction, level, seed=seed)
    assert np.all(y <= x) and np.all((y == x) | np.isclose(y, level * x))


def test_textured_render_pair_is_consistent():
    fine = synth.render_textured_scene(40, 40, [600.0], pixel=1.0, extent=40, supersample=1)
    coarse = synth.render_textured_scene(8, 8, [600.0], pixel=5.0, extent=40, supersample=5)
    # 5x supersampling of a 5-px pixel hits the fine grid's sample points
    block = fine.reflectance[:, :, 0].reshape(8, 5, 8, 5).mean(axis=(1, 3))
    assert np.allclose(block, coarse.reflectance[:, :, 0])
