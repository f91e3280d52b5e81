"""Acquisition planning with the bundled spectral curves.

    python demos/plan_acquisition.py
"""

from hypercal.planner import fixture_curve, flatness, integration_multiplier, recommend_integration, system_efficiency


def main():
    qe, lamp = fixture_curve("qe_ccd"), fixture_curve("illuminant_halogen")
    filt = fixture_curve("equalization_filter")
    bare = system_efficiency(qe, lamp)
    flat = system_efficiency(qe, lamp, filt)
    print(f"peak efficiency at {bare.peak_wavelength:g} nm")
    print(f"efficiency 600 nm / 1000 nm: {bare(600) / bare(1000):.1f}")
    print(f"max/min over 400-1000 nm: {flatness(bare, 400, 1000):.1f} bare, {flatness(flat, 400, 1000):.1f} filtered")
    print(f"integration multiplier with the filter: {integration_multiplier(bare, flat):.2f}")
    print("dark painting reaching 40% of 4095 at 10 ms -> "
          f"{recommend_integration(0.4 * 4095, 10.0, 4095):g} ms for 80%")


if __name__ == "__main__":
    main()
