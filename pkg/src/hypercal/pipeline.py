"""Manifest-driven calibration pipeline with a reproducible run report."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np
import scipy

from . import __version__
from .certified import read_certified_curve
from .cube import SpectralCube, Units
from .envi import read_envi, write_envi
from .errors import ManifestError
from .fixtures import fixture_text
from .geometric import read_sensor_model, rescale_aspect, resample_across_track
from .noise import denoise_spatial_median, denoise_spectral
from .radiometric import (
    Roi,
    apply_flat_field,
    apply_linear_calibration,
    build_flat_field,
    clamp_reflectance,
    estimate_dark,
    fit_multi_target,
    measure_panel,
    single_target_reflectance,
    subtract_dark,
)
from .registration import Strip, StripLayout, coregister, mosaic

logger = logging.getLogger(__name__)

# steps must appear in non-decreasing rank; unranked steps may go anywhere
STEP_RANK = {"dark": 0, "flatfield": 1, "reflectance": 2, "geocorrect": 3, "register": 4, "mosaic": 5, "clamp": 6}


def load_schema() -> dict:
    return json.loads(fixture_text("manifest.schema.json"))


# --- validation --------------------------------------------------------------

def _value_lines(text: str) -> Dict[tuple, int]:
    """Map every JSON path in ``text`` to the line its value starts on."""
    dec = json.JSONDecoder()
    lines: Dict[tuple, int] = {}

    def ws(i):
        while i < len(text) and text[i] in " \t\r\n":
            i += 1
        return i

    def walk(i, path):
        i = ws(i)
        lines[path] = text.count("\n", 0, i) + 1
        if text[i] == "{":
            i = ws(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = dec.raw_decode(text, ws(i))
                i = ws(i) + 1  # ':'
                i = walk(i, path + (key,))
                i = ws(i)
                if text[i] == "}":
                    return i + 1
                i += 1  # ','
        if text[i] == "[":
            i = ws(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = walk(i, path + (k,))
                i = ws(i)
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = dec.raw_decode(text, i)
        return end

    walk(0, ())
    return lines


def _line_of(lines, path) -> int:
    path = tuple(path)
    while path not in lines and path:
        path = path[:-1]
    return lines.get(path, 1)


def validate_manifest(text: str) -> dict:
    """Parse and validate manifest JSON; raises ``ManifestError`` with line-numbered diagnostics."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError([f"line {exc.lineno}: invalid JSON: {exc.msg}"]) from exc
    lines = _value_lines(text)
    validator = jsonschema.Draft202012Validator(load_schema())
    diags = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        diags.append((_line_of(lines, err.absolute_path), f"{where}: {err.message}"))
    if not diags:
        last_rank, last_op = -1, None
        for k, step in enumerate(doc["steps"]):
            rank = STEP_RANK.get(step["op"])
            if rank is None:
                continue
            if rank < last_rank:
                diags.append((_line_of(lines, ("steps", k, "op")),
                              f"steps/{k}: '{step['op']}' must come before '{last_op}'"))
            elif rank > last_rank:
                last_rank, last_op = rank, step["op"]
    if diags:
        raise ManifestError([f"line {ln}: {msg}" for ln, msg in sorted(diags)])
    return doc


# --- execution ---------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StepRecord:
    op: str
    params: Dict[str, Any]
    seconds: float = 0.0
    warnings: List[str] = field(default_factory=list)
    artifact: Optional[str] = None
    summary: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunReport:
    manifest: Optional[str]
    status: str = "running"
    error: Optional[str] = None
    inputs: Dict[str, str] = field(default_factory=dict)
    steps: List[StepRecord] = field(default_factory=list)
    output: Optional[str] = None
    threads: int = 1
    versions: Dict[str, str] = field(default_factory=lambda: {
        "hypercal": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version()})

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest, "status": self.status, "error": self.error, "threads": self.threads,
            "versions": self.versions, "inputs": self.inputs, "output": self.output,
            "steps": [vars(s) for s in self.steps],
        }

    def to_text(self) -> str:
        out = [f"hypercal run report ({self.status})", f"manifest: {self.manifest}", f"threads: {self.threads}"]
        out += [f"{k} {v}" for k, v in self.versions.items()]
        out.append("inputs:")
        out += [f"  {h}  {p}" for p, h in sorted(self.inputs.items())]
        out.append("steps:")
        for k, s in enumerate(self.steps):
            out.append(f"  [{k}] {s.op:<12} {s.seconds:8.3f} s" + (f"  -> {s.artifact}" if s.artifact else ""))
            for key, val in s.summary.items():
                out.append(f"        {key}: {val}")
            out += [f"        warning: {w}" for w in s.warnings]
        if self.output:
            out.append(f"output: {self.output}")
        if self.error:
            out.append(f"error: {self.error}")
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, default=str), encoding="utf-8")
        path.with_suffix(".txt").write_text(self.to_text(), encoding="utf-8")


class _Run:
    """Mutable state threaded through the steps."""

    def __init__(self, base: Path, threads: int, report: RunReport):
        self.base = base
        self.threads = threads
        self.report = report
        self.cube: Optional[SpectralCube] = None
        self.dark = None
        self.flat = None
        self._cache: Dict[Path, SpectralCube] = {}

    def path(self, p) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base / q

    def _hash(self, p: Path):
        files = [p]
        if p.suffix == ".hdr":
            files += [p.with_suffix(s) for s in (".img", ".raw", ".dat", "") if p.with_suffix(s).is_file()]
        for f in files:
            if f.is_file() and str(f) not in self.report.inputs:
                self.report.inputs[str(f)] = sha256_file(f)

    def read_cube(self, p) -> SpectralCube:
        q = self.path(p)
        if q not in self._cache:
            self._hash(q)
            self._cache[q] = read_envi(q)
        return self._cache[q]

    def read_certified(self, p, nominal=None):
        q = self.path(p)
        self._hash(q)
        return read_certified_curve(q, nominal=nominal)

    def prepared(self, scan: SpectralCube) -> SpectralCube:
        """Apply the dark and flat already established to an auxiliary scan."""
        out = scan if self.dark is None else subtract_dark(scan, self.dark)
        return out if self.flat is None else apply_flat_field(out, self.flat)


def _step_inspect(run: _Run, step):
    c = run.cube
    info = {"lines": c.lines, "samples": c.samples, "bands": c.bands, "units": c.units.value,
            "wavelengths_nm": f"{c.wavelengths[0]:g}..{c.wavelengths[-1]:g}", "dtype": str(c.data.dtype)}
    logger.info("inspect: %s", info)
    return info


def _step_dark(run: _Run, step):
    run.dark = estimate_dark(run.read_cube(step["scan"]), step.get("integration_tag", ""))
    run.cube = subtract_dark(run.cube, run.dark)
    return {"mean_dark": float(run.dark.offsets.mean())}


def _step_flatfield(run: _Run, step):
    scan = run.read_cube(step["scan"])
    if "roi" in step:
        roi = Roi.parse(step["roi"])
        roi.check(scan)
        scan = scan.with_data(scan.data[roi.lines_slice])
    run.flat = build_flat_field(scan, run.dark)
    run.cube = apply_flat_field(run.cube, run.flat)
    g = run.flat.gains
    return {"gain_range": [float(g.min()), float(g.max())]}


def _step_reflectance(run: _Run, step):
    mode = step["mode"]
    method = step.get("method", "skew_mode")
    panels_cfg = step["panels"]
    summary: Dict[str, Any] = {"mode": mode, "method": method}

    def measure(cfg, flat):
        scan = run.read_cube(cfg["scan"]) if "scan" in cfg else None
        cert = run.read_certified(cfg["certified"], cfg.get("nominal"))
        roi = Roi.parse(cfg["roi"])
        if scan is None:
            # the panel is in the working cube, already dark subtracted / flat fielded
            return measure_panel(run.cube, roi, cert, method=method, workers=run.threads)
        return measure_panel(scan, roi, cert, dark=run.dark, flat=flat, method=method, workers=run.threads)

    if mode == "full_field":
        cfg = panels_cfg[0]
        if "scan" not in cfg:
            raise ManifestError(["full_field reflectance needs a panel 'scan'"])
        if run.flat is not None:
            raise ManifestError(["full_field reflectance builds its own flat field; drop the flatfield step"])
        scan = run.read_cube(cfg["scan"])
        roi = Roi.parse(cfg["roi"])
        roi.check(scan)
        run.flat = build_flat_field(scan.with_data(scan.data[roi.lines_slice]), run.dark)
        panel = measure(cfg, run.flat)
        run.cube = single_target_reflectance(apply_flat_field(run.cube, run.flat), None, panel,
                                             use_nominal=step.get("use_nominal", False))
    elif mode == "single":
        panel = measure(panels_cfg[0], run.flat)
        run.cube = single_target_reflectance(run.cube, None, panel, use_nominal=step.get("use_nominal", False))
    else:
        panels = [measure(cfg, run.flat) for cfg in panels_cfg]
        cal = fit_multi_target(panels, mode=step.get("multi_mode", "per_pixel"))
        run.cube = apply_linear_calibration(run.cube, None, cal)
        summary["median_offset"] = float(np.median(cal.offset))
        summary["fallback_pixels"] = int(cal.fallback.sum())
    return summary


def _step_denoise(run: _Run, step):
    if step.get("method", "spectral") == "spectral":
        run.cube = denoise_spectral(run.cube, step.get("window", 7), step.get("degree", 2), workers=run.threads)
    else:
        run.cube = denoise_spatial_median(run.cube, step.get("radius", 1), workers=run.threads)
    return {}


def _step_geocorrect(run: _Run, step):
    summary = {}
    if "sensor_model" in step:
        q = run.path(step["sensor_model"])
        run._hash(q)
        model = read_sensor_model(q)
        run.cube = resample_across_track(run.cube, model, step.get("out_samples"))
        summary["sensor_model_spread"] = model.spread
    if "scale" in step:
        run.cube = rescale_aspect(run.cube, float(step["scale"]))
        summary["scale"] = float(step["scale"])
    return summary


def _step_register(run: _Run, step):
    swir = run.read_cube(step["swir"])
    tie = tuple(step["tie_bands"]) if "tie_bands" in step else None
    res = coregister(run.cube, swir, nominal_scale=step.get("nominal_scale"), tie_bands=tie,
                     min_confidence=step.get("min_confidence", 0.1), return_details=True)
    run.cube = res.cube
    return {"scale": list(res.scale), "offset": [res.offset.dx, res.offset.dy],
            "confidence": res.offset.confidence, "split_nm": res.split_wavelength}


def _step_mosaic(run: _Run, step):
    strips = [Strip(run.cube, tuple(step.get("offset", (0.0, 0.0))))]
    strips += [Strip(run.read_cube(s["path"]), tuple(s["offset"])) for s in step["strips"]]
    layout = StripLayout(strips, step.get("overlap_threshold", 8))
    res = mosaic(layout, step.get("reference_band"), max_correction=step.get("max_correction", 10.0),
                 fallback_to_nominal=step.get("fallback_to_nominal", False), return_details=True)
    run.cube = res.cube
    return {"offsets": [list(map(float, o)) for o in res.offsets]}


def _step_clamp(run: _Run, step):
    run.cube = clamp_reflectance(run.cube, step.get("limit", 1.1))
    return {}


STEPS = {
    "inspect": _step_inspect, "dark": _step_dark, "flatfield": _step_flatfield, "reflectance": _step_reflectance,
    "denoise": _step_denoise, "geocorrect": _step_geocorrect, "register": _step_register,
    "mosaic": _step_mosaic, "clamp": _step_clamp,
}


def _write_output(cube: SpectralCube, path: Path) -> Path:
    if cube.units is Units.REFLECTANCE_FACTOR or np.issubdtype(cube.data.dtype, np.floating):
        return write_envi(path, cube.with_data(np.asarray(cube.data, dtype=np.float32)), data_type=4)
    return write_envi(path, cube)


def run_pipeline(manifest, base_dir=None, threads: Optional[int] = None, input_cube: Optional[SpectralCube] = None,
                 output=None):
    """Execute a validated manifest.

    ``manifest`` is a path, JSON text or an already-parsed dict. Returns
    ``(cube, report)``. ``threads`` and ``output`` override the manifest.
    On failure the report (status ``error``) is written if a report path is
    configured, intermediates already written are kept, and the exception
    propagates.
    """
    manifest_path = None
    if isinstance(manifest, dict):
        doc = validate_manifest(json.dumps(manifest, indent=1))
    else:
        text = str(manifest)
        if not text.lstrip().startswith("{"):
            manifest_path = Path(text)
            text = manifest_path.read_text(encoding="utf-8")
        doc = validate_manifest(text)
    if output is not None:
        doc["output"] = str(Path(output).resolve())
    base = Path(base_dir) if base_dir is not None else (manifest_path.parent if manifest_path else Path.cwd())
    n_threads = threads or doc.get("threads", 1)
    if "log_level" in doc:
        logging.getLogger("hypercal").setLevel(doc["log_level"])
    report = RunReport(str(manifest_path) if manifest_path else None, threads=n_threads)
    run = _Run(base, n_threads, report)
    if manifest_path is not None:
        run._hash(manifest_path)
    report_path = run.path(doc["report"]) if "report" in doc else (
        run.path(doc["output"]).with_suffix(".report.json") if "output" in doc else None)
    inter = run.path(doc["intermediates"]) if "intermediates" in doc else None
    try:
        run.cube = input_cube if input_cube is not None else run.read_cube(doc["input"])
        for k, step in enumerate(doc["steps"]):
            rec = StepRecord(step["op"], {key: v for key, v in step.items() if key != "op"})
            report.steps.append(rec)
            t0 = time.perf_counter()
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                rec.summary = STEPS[step["op"]](run, step) or {}
            rec.seconds = time.perf_counter() - t0
            rec.warnings = [str(w.message) for w in caught]
            for w in caught:
                logger.warning("%s: %s", step["op"], w.message)
            if inter is not None and step["op"] != "inspect":
                inter.mkdir(parents=True, exist_ok=True)
                rec.artifact = str(_write_output(run.cube, inter / f"{k:02d}_{step['op']}.hdr"))
        if "output" in doc:
            report.output = str(_write_output(run.cube, run.path(doc["output"])))
        report.status = "ok"
    except Exception as exc:
        report.status = "error"
        step_name = report.steps[-1].op if report.steps else "input"
        report.error = f"{step_name}: {type(exc).__name__}: {exc}"
        raise
    finally:
        if report_path is not None:
            report.write(report_path)
    return run.cube, report
