"""Command-line front end: ``hypercal <subcommand> ...``.

Exit codes: 0 success, 1 processing error, 2 usage or manifest validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certified import format_certified_curve, read_certified_curve
from .cube import SpectralCube
from .envi import read_envi, write_envi
from .errors import HypercalError, ManifestError
from .fixtures import certified_fixture
from .geometric import read_sensor_model, rescale_aspect, resample_across_track
from .noise import denoise_spatial_median, denoise_spectral
from .pipeline import _write_output, run_pipeline
from .planner import (
    CurveKind,
    FocusSeries,
    fixture_curve,
    flatness,
    focus_curves,
    format_curve,
    integration_multiplier,
    read_curve,
    recommend_integration,
    system_efficiency,
)
from .radiometric import (
    DarkFrame,
    FlatField,
    Roi,
    apply_flat_field,
    apply_linear_calibration,
    build_flat_field,
    estimate_dark,
    fit_multi_target,
    load_product,
    measure_panel,
    save_product,
    single_target_reflectance,
    subtract_dark,
)
from .registration import Strip, StripLayout, coregister, mosaic
from . import synth

logger = logging.getLogger("hypercal")


# --- helpers -----------------------------------------------------------------

def _load_dark(path) -> DarkFrame:
    """A saved DarkFrame product, or a raw shutter-closed scan to average."""
    p = Path(path)
    if p.with_suffix(".json").is_file():
        product, _ = load_product(p)
        if isinstance(product, DarkFrame):
            return product
    return estimate_dark(read_envi(p))


def _load_flat(path) -> FlatField:
    product, _ = load_product(path)
    if not isinstance(product, FlatField):
        raise HypercalError(f"{path} is not a flat-field product")
    return product


def _prepare(cube, args):
    if getattr(args, "dark", None):
        cube = subtract_dark(cube, _load_dark(args.dark))
    if getattr(args, "flat", None):
        cube = apply_flat_field(cube, _load_flat(args.flat))
    return cube


def _xy(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from exc
    return x, y


def _strip(text):
    path, sep, off = text.rpartition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected 'path:x,y', got {text!r}")
    return path, _xy(off)


def _roi(text):
    try:
        return Roi.parse(text)
    except HypercalError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


# --- subcommands -------------------------------------------------------------

def cmd_inspect(args):
    c = read_envi(args.input)
    print(f"lines {c.lines}  samples {c.samples}  bands {c.bands}")
    print(f"dtype {c.data.dtype}  units {c.units.value}  code_max {c.code_max:g}")
    print("wavelengths " + " ".join(f"{w:g}" for w in c.wavelengths))
    return 0


def cmd_dark(args):
    scan = read_envi(args.input)
    dark = estimate_dark(scan, args.integration_tag)
    save_product(args.output, dark, scan.wavelengths, {"source": str(args.input)})
    logger.info("dark frame from %d lines written to %s", dark.source_lines, args.output)
    return 0


def cmd_flatfield(args):
    scan = read_envi(args.input)
    if args.panel_roi:
        args.panel_roi.check(scan)
        scan = scan.with_data(scan.data[args.panel_roi.lines_slice])
    flat = build_flat_field(scan, _load_dark(args.dark) if args.dark else None)
    save_product(args.output, flat, scan.wavelengths, {"source": str(args.input)})
    return 0


def cmd_reflectance(args):
    cube = _prepare(read_envi(args.input), args)
    dark = _load_dark(args.dark) if args.dark else None
    flat = _load_flat(args.flat) if args.flat else None
    scans = args.panel_scan or [args.input]
    rois, certs = args.panel_roi, args.certified
    if not rois or len(rois) != len(certs):
        raise HypercalError("give one --certified per --panel-roi")
    if len(scans) == 1:
        scans = scans * len(rois)
    if len(scans) != len(rois):
        raise HypercalError("give one --panel-scan per panel, or a single scan for all")
    panels = []
    for scan_path, roi, cert_path in zip(scans, rois, certs):
        scan = read_envi(scan_path)
        panels.append(measure_panel(scan, roi, read_certified_curve(cert_path), dark=dark, flat=flat,
                                    method=args.method, workers=args.threads))
    if args.kind == "single":
        out = single_target_reflectance(cube, None, panels[0], use_nominal=args.use_nominal)
    else:
        cal = fit_multi_target(panels, mode=args.mode)
        if args.calibration_output:
            save_product(args.calibration_output, cal, cube.wavelengths, {"source": str(args.input)})
        out = apply_linear_calibration(cube, None, cal)
    _write_output(out, Path(args.output))
    return 0


def cmd_denoise(args):
    cube = read_envi(args.input)
    if args.method == "spectral":
        out = denoise_spectral(cube, args.window, args.degree, workers=args.threads)
    else:
        out = denoise_spatial_median(cube, args.radius, workers=args.threads)
    _write_output(out, Path(args.output))
    return 0


def cmd_geocorrect(args):
    if args.sensor_model is None and args.scale is None:
        raise HypercalError("give --sensor-model and/or --scale")
    cube = read_envi(args.input)
    if args.sensor_model:
        cube = resample_across_track(cube, read_sensor_model(args.sensor_model), args.out_samples)
    if args.scale is not None:
        cube = rescale_aspect(cube, args.scale)
    _write_output(cube, Path(args.output))
    return 0


def cmd_register(args):
    res = coregister(read_envi(args.input), read_envi(args.swir), nominal_scale=args.nominal_scale,
                     min_confidence=args.min_confidence, return_details=True)
    print(f"scale {res.scale[1]:.6f}  offset ({res.offset.dx:.3f}, {res.offset.dy:.3f})  "
          f"confidence {res.offset.confidence:.3f}")
    _write_output(res.cube, Path(args.output))
    return 0


def cmd_mosaic(args):
    strips = [Strip(read_envi(args.input), args.offset)]
    strips += [Strip(read_envi(p), off) for p, off in args.strip]
    res = mosaic(StripLayout(strips, args.overlap_threshold), args.reference_band,
                 max_correction=args.max_correction, return_details=True)
    for k, (x, y) in enumerate(res.offsets):
        print(f"strip {k}: offset ({x:.3f}, {y:.3f})")
    _write_output(res.cube, Path(args.output))
    return 0


def cmd_focus(args):
    if len(args.input) != len(args.distance):
        raise HypercalError("give one --distance per --input")
    res = focus_curves(FocusSeries(args.distance, [read_envi(p) for p in args.input]))
    text = res.to_csv()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_efficiency(args):
    qe = read_curve(args.qe, CurveKind.QUANTUM_EFFICIENCY) if args.qe else fixture_curve("qe_ccd")
    ill = read_curve(args.illuminant, CurveKind.RELATIVE_POWER) if args.illuminant else fixture_curve(
        "illuminant_halogen")
    filt = None
    if args.filter:
        filt = fixture_curve("equalization_filter") if args.filter == "fixture" else read_curve(
            args.filter, CurveKind.TRANSMISSION)
    eff = system_efficiency(qe, ill)
    print(f"peak {eff.peak_wavelength:g} nm; efficiency(600)/efficiency(1000) = {eff(600) / eff(1000):.2f}")
    out = eff
    if filt is not None:
        eff_f = system_efficiency(qe, ill, filt)
        print(f"integration multiplier with filter: {integration_multiplier(eff, eff_f):.3f}")
        print(f"max/min over 400-1000 nm: {flatness(eff, 400, 1000):.2f} -> {flatness(eff_f, 400, 1000):.2f}")
        out = eff_f
    if args.output:
        Path(args.output).write_text(format_curve(out), encoding="utf-8")
    return 0


def cmd_recommend(args):
    t = recommend_integration(args.measured_max, args.current, args.code_max, args.target_fraction)
    print(f"{t:.6g}")
    return 0


def cmd_synth(args):
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    wl = np.linspace(400.0, 1000.0, args.bands)
    cert = certified_fixture("certified_99")
    scene = synth.pigment_scene(args.lines, args.samples, wl, seed=args.seed)
    snr = 0 if args.noise_free else args.snr
    model = synth.standard_model(args.samples, wl, snr=snr, seed=args.seed,
                                 **({"quantize": False} if args.noise_free else {}))
    raw, truth = synth.simulate_acquisition(scene, model, workers=args.threads)
    dark = synth.simulate_dark(model, args.dark_lines, wl, workers=args.threads)
    panel_scene = synth.certified_panel_scene(args.panel_lines, args.samples, wl, cert)
    panel, _ = synth.simulate_acquisition(panel_scene, model, stream=synth.STREAM_PANEL, workers=args.threads)
    write_envi(out / "scene.hdr", raw)
    write_envi(out / "dark.hdr", dark)
    write_envi(out / "panel.hdr", panel)
    write_envi(out / "truth.hdr", SpectralCube(truth.reflectance.astype(np.float32), wl,
                                               units="reflectance_factor"), data_type=4)
    (out / "certified_99.csv").write_text(format_certified_curve(cert), encoding="utf-8")
    (out / "truth.json").write_text(json.dumps({
        "seed": args.seed, "integration": model.integration, "read_noise": model.read_noise,
        "code_max": model.code_max, "clipped_pixels": int(truth.clipped.sum()),
        "illumination": model.illumination.tolist(), "efficiency": model.efficiency.tolist(),
    }, indent=1), encoding="utf-8")
    steps = [{"op": "dark", "scan": "dark.hdr"},
             {"op": "reflectance", "mode": "full_field", "method": "skew_mode",
              "panels": [{"scan": "panel.hdr", "roi": f"0,0,{args.samples},{args.panel_lines}",
                          "certified": "certified_99.csv"}]}]
    if not args.noise_free:
        steps.append({"op": "denoise", "method": "spectral", "window": 7, "degree": 2})
    manifest = {"version": 1, "input": "scene.hdr", "output": "reflectance.hdr", "threads": args.threads,
                "steps": steps}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote simulation to {out}; run: hypercal pipeline --manifest {out / 'manifest.json'}")
    return 0


def cmd_pipeline(args):
    _, report = run_pipeline(args.manifest, threads=args.threads, output=args.output)
    if report.output:
        print(f"output: {report.output}")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypercal", description="Hyperspectral calibration toolkit")
    p.add_argument("--version", action="version", version=f"hypercal {__version__}")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    s = add("inspect", cmd_inspect, "print cube dimensions and wavelengths")
    s.add_argument("--input", required=True)

    s = add("dark", cmd_dark, "average a dark scan into a dark frame")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--integration-tag", default="")

    s = add("flatfield", cmd_flatfield, "build a flat field from a uniform target")
    s.add_argument("--input", required=True)
    s.add_argument("--dark")
    s.add_argument("--panel-roi", type=_roi, help="lines of the scan to use: sample0,line0,width,height")
    s.add_argument("--output", required=True)

    s = add("reflectance", cmd_reflectance, "convert counts to reflectance factor")
    s.add_argument("kind", choices=["single", "multi"])
    s.add_argument("--input", required=True)
    s.add_argument("--dark")
    s.add_argument("--flat")
    s.add_argument("--panel-scan", action="append", help="scan containing the panel (default: --input)")
    s.add_argument("--panel-roi", type=_roi, action="append", required=True)
    s.add_argument("--certified", action="append", required=True)
    s.add_argument("--method", default="skew_mode", choices=["mean", "median", "skew_mode"])
    s.add_argument("--mode", default="per_pixel", choices=["per_pixel", "global"])
    s.add_argument("--use-nominal", action="store_true")
    s.add_argument("--calibration-output")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--output", required=True)

    s = add("denoise", cmd_denoise, "spectral or spatial smoothing")
    s.add_argument("--input", required=True)
    s.add_argument("--method", default="spectral", choices=["spectral", "median"])
    s.add_argument("--window", type=int, default=7)
    s.add_argument("--degree", type=int, default=2)
    s.add_argument("--radius", type=int, default=1)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--output", required=True)

    s = add("geocorrect", cmd_geocorrect, "sensor-model resampling and aspect correction")
    s.add_argument("--input", required=True)
    s.add_argument("--sensor-model")
    s.add_argument("--out-samples", type=int)
    s.add_argument("--scale", type=float)
    s.add_argument("--output", required=True)

    s = add("register", cmd_register, "co-register a SWIR cube onto a VNIR cube")
    s.add_argument("--input", required=True, help="VNIR cube")
    s.add_argument("--swir", required=True)
    s.add_argument("--nominal-scale", type=float)
    s.add_argument("--min-confidence", type=float, default=0.1)
    s.add_argument("--output", required=True)

    s = add("mosaic", cmd_mosaic, "assemble overlapping strips")
    s.add_argument("--input", required=True, help="first strip")
    s.add_argument("--offset", type=_xy, default=(0.0, 0.0), help="first strip offset x,y")
    s.add_argument("--strip", type=_strip, action="append", required=True, help="path:x,y")
    s.add_argument("--reference-band", type=int)
    s.add_argument("--overlap-threshold", type=int, default=8)
    s.add_argument("--max-correction", type=float, default=10.0)
    s.add_argument("--output", required=True)

    s = add("focus", cmd_focus, "per-band best focus distance")
    s.add_argument("--input", action="append", required=True)
    s.add_argument("--distance", type=float, action="append", required=True)
    s.add_argument("--output")

    s = add("efficiency", cmd_efficiency, "system spectral efficiency")
    s.add_argument("--qe")
    s.add_argument("--illuminant")
    s.add_argument("--filter", help="transmission CSV, or 'fixture' for the bundled filter")
    s.add_argument("--output")

    s = add("recommend-integration", cmd_recommend, "integration time for a target fill fraction")
    s.add_argument("--measured-max", type=float, required=True)
    s.add_argument("--current", type=float, required=True)
    s.add_argument("--code-max", type=float, required=True)
    s.add_argument("--target-fraction", type=float, default=0.8)

    s = add("synth", cmd_synth, "simulate a scene, dark and panel scan with ground truth")
    s.add_argument("--output", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lines", type=int, default=128)
    s.add_argument("--samples", type=int, default=128)
    s.add_argument("--bands", type=int, default=50)
    s.add_argument("--dark-lines", type=int, default=100)
    s.add_argument("--panel-lines", type=int, default=48)
    s.add_argument("--snr", type=float, default=200.0)
    s.add_argument("--noise-free", action="store_true")
    s.add_argument("--threads", type=int, default=1)

    s = add("pipeline", cmd_pipeline, "run a JSON manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--threads", type=int)
    s.add_argument("--output")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ManifestError as exc:
        for d in exc.diagnostics:
            print(f"manifest error: {d}", file=sys.stderr)
        return 2
    except (HypercalError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
