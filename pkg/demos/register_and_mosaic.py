"""Merge a VNIR and a SWIR render of one scene, then stitch two strips.

    python demos/register_and_mosaic.py
"""

import numpy as np

from hypercal import synth
from hypercal.cube import Units
from hypercal.registration import Strip, StripLayout, coregister, mosaic


def main():
    origin = (2.4, -1.1)
    vnir = synth.render_textured_scene(200, 800, np.linspace(400, 1000, 31), extent=800).cube()
    swir = synth.render_textured_scene(40, 160, np.linspace(950, 2500, 40), pixel=5.0, origin=origin,
                                       extent=800).cube()
    res = coregister(vnir, swir, return_details=True)
    print(f"true scale 5, offset {origin}")
    print(f"found scale {res.scale[1]:.5f}, offset ({res.offset.dx:.3f}, {res.offset.dy:.3f}), "
          f"correlation {res.offset.confidence:.4f}")
    print(f"merged cube {res.cube.shape}, VNIR up to {res.split_wavelength:g} nm, SWIR above")

    data = res.cube.data
    left = res.cube.with_data(data[:, :500], units=Units.REFLECTANCE_FACTOR)
    right = res.cube.with_data(data[:, 380:], units=Units.REFLECTANCE_FACTOR)
    # stage positions are known only to a few pixels
    layout = StripLayout([Strip(left, (0.0, 0.0)), Strip(right, (383.0, 2.0))])
    out = mosaic(layout, return_details=True)
    (x0, y0), (x1, y1) = out.offsets
    print(f"strip 2 placed at ({x1 - x0:.3f}, {y1 - y0:.3f}) relative to strip 1; truth (380, 0)")


if __name__ == "__main__":
    main()
