import json

import numpy as np
import pytest

from hypercal import synth
from hypercal.cli import main
from hypercal.cube import SpectralCube, Units
from hypercal.errors import CalibrationWarning
from hypercal.envi import read_envi, write_envi
from hypercal.geometric import format_sensor_model, v_profile


def run(*argv):
    return main(["--log-level", "ERROR", *map(str, argv)])


def test_inspect(sim_dir, capsys):
    assert run("inspect", "--input", sim_dir / "scene.hdr") == 0
    assert "lines 40  samples 32  bands 15" in capsys.readouterr().out


def test_calibration_chain_by_hand(sim_dir, tmp_path):
    scene, dark, panel = sim_dir / "scene.hdr", tmp_path / "dark", tmp_path / "flat"
    assert run("dark", "--input", sim_dir / "dark.hdr", "--output", dark) == 0
    assert run("flatfield", "--input", sim_dir / "panel.hdr", "--dark", tmp_path / "dark.hdr",
               "--output", panel) == 0
    out = tmp_path / "refl.hdr"
    assert run("reflectance", "single", "--input", scene, "--dark", tmp_path / "dark.hdr",
               "--flat", tmp_path / "flat.hdr", "--panel-scan", sim_dir / "panel.hdr", "--panel-roi", "0,0,32,30",
               "--certified", sim_dir / "certified_99.csv", "--output", out) == 0
    refl = read_envi(out)
    truth = read_envi(sim_dir / "truth.hdr")
    assert refl.units is Units.REFLECTANCE_FACTOR
    assert np.sqrt(np.mean((refl.data - truth.data) ** 2)) < 0.02
    assert run("denoise", "--input", out, "--window", 5, "--output", tmp_path / "smooth.hdr") == 0
    # two identical 99% panels leave one distinct level, so every band falls back
    with pytest.warns(CalibrationWarning, match="fell back"):
        code = run("reflectance", "multi", "--input", scene, "--dark", tmp_path / "dark.hdr",
                   "--panel-scan", sim_dir / "panel.hdr", "--panel-roi", "0,0,32,15", "--panel-roi", "0,15,32,15",
                   "--certified", sim_dir / "certified_99.csv", "--certified", sim_dir / "certified_99.csv",
                   "--method", "median", "--calibration-output", tmp_path / "cal",
                   "--output", tmp_path / "multi.hdr")
    assert code == 0
    assert (tmp_path / "cal.hdr").is_file() and (tmp_path / "cal.json").is_file()


def test_geocorrect(tmp_path):
    c = SpectralCube(np.random.default_rng(0).random((10, 16, 2)), [500.0, 600.0])
    write_envi(tmp_path / "in.hdr", c)
    (tmp_path / "model.csv").write_text(format_sensor_model(v_profile(16)))
    assert run("geocorrect", "--input", tmp_path / "in.hdr", "--sensor-model", tmp_path / "model.csv",
               "--scale", 1.5, "--output", tmp_path / "out.hdr") == 0
    assert read_envi(tmp_path / "out.hdr").shape == (15, 16, 2)
    assert run("geocorrect", "--input", tmp_path / "in.hdr", "--output", tmp_path / "x.hdr") == 1


def test_register_and_mosaic(tmp_path, capsys):
    vnir = synth.render_textured_scene(80, 200, np.linspace(400, 1000, 7), extent=200).cube()
    swir = synth.render_textured_scene(16, 40, np.linspace(950, 2500, 6), pixel=5.0, origin=(1.0, 0.5),
                                       extent=200).cube()
    write_envi(tmp_path / "v.hdr", vnir, data_type=4)
    write_envi(tmp_path / "s.hdr", swir, data_type=4)
    assert run("register", "--input", tmp_path / "v.hdr", "--swir", tmp_path / "s.hdr",
               "--output", tmp_path / "merged.hdr") == 0
    assert "scale 5.0" in capsys.readouterr().out
    merged = read_envi(tmp_path / "merged.hdr")
    assert merged.shape[:2] == (80, 200) and np.all(np.diff(merged.wavelengths) > 0)

    img = vnir.data
    write_envi(tmp_path / "a.hdr", vnir.with_data(img[:, :120]), data_type=4)
    write_envi(tmp_path / "b.hdr", vnir.with_data(img[:, 80:]), data_type=4)
    assert run("mosaic", "--input", tmp_path / "a.hdr", "--strip", f"{tmp_path / 'b.hdr'}:82,1",
               "--output", tmp_path / "mosaic.hdr") == 0
    assert "strip 1" in capsys.readouterr().out
    assert read_envi(tmp_path / "mosaic.hdr").samples in (200, 201)


def test_focus(tmp_path, capsys):
    rng = np.random.default_rng(1)
    base = rng.random((24, 24))
    paths = []
    for k, d in enumerate([1.0, 2.0, 3.0, 4.0]):
        c = SpectralCube((base * (1.0 - 0.2 * abs(d - 2.5)))[:, :, None], [600.0])
        write_envi(tmp_path / f"f{k}.hdr", c, data_type=4)
        paths += ["--input", tmp_path / f"f{k}.hdr", "--distance", d]
    assert run("focus", *paths) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "wavelength_nm,optimal_distance,peak_sharpness,at_edge"
    assert float(lines[1].split(",")[1]) == pytest.approx(2.5, abs=0.1)


def test_efficiency_and_recommend(tmp_path, capsys):
    assert run("efficiency", "--filter", "fixture", "--output", tmp_path / "eff.csv") == 0
    out = capsys.readouterr().out
    assert "integration multiplier with filter: 3.0" in out
    assert (tmp_path / "eff.csv").read_text().startswith("wavelength_nm,value")
    assert run("recommend-integration", "--measured-max", 1638, "--current", 10, "--code-max", 4095) == 0
    assert float(capsys.readouterr().out) == pytest.approx(20.0)
    assert run("recommend-integration", "--measured-max", 4095, "--current", 10, "--code-max", 4095) == 1


def test_pipeline_exit_codes(sim_dir, tmp_path, capsys):
    assert run("pipeline", "--manifest", sim_dir / "manifest.json", "--output", tmp_path / "r.hdr") == 0
    assert (tmp_path / "r.hdr").is_file() and (tmp_path / "r.report.json").is_file()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"input": "x.hdr", "steps": [{"op": "denoise", "window": 2}]}, indent=2))
    assert run("pipeline", "--manifest", bad) == 2
    assert "line " in capsys.readouterr().err
    assert run("pipeline", "--manifest", tmp_path / "nope.json") == 1
    with pytest.raises(SystemExit) as info:
        run("reflectance")
    assert info.value.code == 2


def test_synth_noise_free_is_exact(tmp_path):
    out = tmp_path / "nf"
    assert run("synth", "--output", out, "--noise-free", "--lines", 16, "--samples", 16, "--bands", 8,
               "--panel-lines", 24, "--dark-lines", 20) == 0
    assert run("pipeline", "--manifest", out / "manifest.json") == 0
    err = np.abs(read_envi(out / "reflectance.hdr").data - read_envi(out / "truth.hdr").data).max()
    assert err < 1e-6
