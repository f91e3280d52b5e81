"""Simulate a painting scan, calibrate it, and compare with the known reflectance.

    python demos/calibrate_simulated_scan.py [--samples 256] [--bands 60]
"""

import argparse
import logging

import numpy as np

from hypercal import synth
from hypercal.fixtures import certified_fixture
from hypercal.noise import denoise_spectral
from hypercal.radiometric import Roi, calibrate_full_field, estimate_dark, measure_panel, single_target_reflectance


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--lines", type=int, default=256)
    p.add_argument("--bands", type=int, default=60)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    wl = np.linspace(400.0, 1000.0, args.bands)
    cert = certified_fixture("certified_99")
    model = synth.standard_model(args.samples, wl, snr=200, seed=args.seed)
    scene = synth.pigment_scene(args.lines, args.samples, wl, seed=args.seed)
    raw, truth = synth.simulate_acquisition(scene, model)
    dark_scan = synth.simulate_dark(model, 100, wl)
    panel_scan, _ = synth.simulate_acquisition(synth.certified_panel_scene(48, args.samples, wl, cert), model,
                                               stream=synth.STREAM_PANEL)
    dark = estimate_dark(dark_scan)
    roi = Roi(0, 0, args.samples, 48)

    def rmse(cube):
        return np.sqrt(np.mean((cube.data - truth.reflectance) ** 2))

    # a small panel in one corner cannot correct illumination or pixel gain
    corner = Roi(0, 0, 16, 48)
    small = single_target_reflectance(raw, dark, measure_panel(panel_scan, corner, cert, dark=dark))
    print(f"single small panel              RMSE {rmse(small):.4f}")

    full = calibrate_full_field(raw, panel_scan, roi, cert, dark)
    print(f"full-field panel (flat + scale) RMSE {rmse(full):.4f}")
    smooth = denoise_spectral(full, window=7)
    print(f"  + spectral smoothing (w=7)    RMSE {rmse(smooth):.4f}")


if __name__ == "__main__":
    main()
