import json

import numpy as np
import pytest

from hypercal.envi import read_envi
from hypercal.errors import ManifestError
from hypercal.pipeline import run_pipeline, validate_manifest


def _manifest(sim_dir, **changes):
    doc = json.loads((sim_dir / "manifest.json").read_text())
    doc.update(changes)
    return doc


def test_synth_manifest_runs_and_recovers_truth(sim_dir):
    cube, report = run_pipeline(sim_dir / "manifest.json")
    truth = read_envi(sim_dir / "truth.hdr").data
    assert report.status == "ok"
    assert np.sqrt(np.mean((cube.data - truth) ** 2)) < 0.01
    assert read_envi(sim_dir / "reflectance.hdr").data.dtype == np.float32
    saved = json.loads((sim_dir / "reflectance.report.json").read_text())
    assert [s["op"] for s in saved["steps"]] == ["dark", "reflectance", "denoise"]
    assert str(sim_dir / "manifest.json") in saved["inputs"]
    assert all(len(h) == 64 for h in saved["inputs"].values())
    assert {"hypercal", "numpy", "scipy"} <= set(saved["versions"])
    assert (sim_dir / "reflectance.report.txt").read_text().startswith("hypercal run report (ok)")


def test_intermediates_and_clamp(sim_dir):
    doc = _manifest(sim_dir, intermediates="steps", report="run/report.json")
    doc["steps"].append({"op": "clamp"})
    cube, report = run_pipeline(doc, base_dir=sim_dir)
    names = sorted(p.name for p in (sim_dir / "steps").glob("*.hdr"))
    assert names == ["00_dark.hdr", "01_reflectance.hdr", "02_denoise.hdr", "03_clamp.hdr"]
    assert cube.data.min() >= 0 and cube.data.max() <= 1.1
    assert (sim_dir / "run" / "report.json").is_file()


def test_thread_count_does_not_change_output(sim_dir):
    a, _ = run_pipeline(sim_dir / "manifest.json", threads=1)
    b, _ = run_pipeline(sim_dir / "manifest.json", threads=4)
    assert np.asarray(a.data).tobytes() == np.asarray(b.data).tobytes()


def test_multi_and_single_modes(sim_dir):
    panel = {"scan": "panel.hdr", "roi": "0,0,32,30", "certified": "certified_99.csv"}
    for mode in ("single", "multi"):
        doc = _manifest(sim_dir, output=f"{mode}.hdr")
        doc["steps"] = [{"op": "dark", "scan": "dark.hdr"},
                        {"op": "reflectance", "mode": mode, "method": "median", "panels": [panel, panel]}]
        cube, report = run_pipeline(doc, base_dir=sim_dir)
        assert report.status == "ok" and cube.units.value == "reflectance_factor"


def test_validation_reports_line_numbers():
    text = '{\n  "input": "a.hdr",\n  "steps": [\n    {"op": "denoise", "window": 2}\n  ]\n}\n'
    with pytest.raises(ManifestError) as info:
        validate_manifest(text)
    assert any(d.startswith("line 4:") and "window" in d for d in info.value.diagnostics)


def test_validation_rejects_bad_order_and_unknown_keys():
    text = json.dumps({"input": "a.hdr", "steps": [
        {"op": "reflectance", "mode": "single", "panels": [{"roi": "0,0,1,1", "certified": "c.csv"}]},
        {"op": "dark", "scan": "d.hdr"}]}, indent=2)
    with pytest.raises(ManifestError) as info:
        validate_manifest(text)
    assert any("must come before" in d for d in info.value.diagnostics)
    with pytest.raises(ManifestError):
        validate_manifest('{"input": "a.hdr", "steps": [{"op": "dark", "scan": "d", "bogus": 1}]}')
    with pytest.raises(ManifestError):
        validate_manifest("{not json")


def test_full_field_after_flatfield_is_rejected(sim_dir):
    doc = _manifest(sim_dir)
    doc["steps"].insert(1, {"op": "flatfield", "scan": "panel.hdr"})
    with pytest.raises(ManifestError):
        run_pipeline(doc, base_dir=sim_dir)


def test_failure_writes_error_report(sim_dir):
    doc = _manifest(sim_dir, report="failed.json")
    doc["steps"][0]["scan"] = "missing.hdr"
    with pytest.raises(OSError):
        run_pipeline(doc, base_dir=sim_dir)
    saved = json.loads((sim_dir / "failed.json").read_text())
    assert saved["status"] == "error" and saved["error"].startswith("dark:")
