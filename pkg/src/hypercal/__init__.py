"""Hyperspectral calibration toolkit for push-broom line-scan cameras."""

__version__ = "0.1.0"

from .certified import CertifiedCurve, parse_certified_curve, read_certified_curve, resample_curve
from .cube import SpectralCube, Units
from .envi import EnviHeader, read_envi, write_envi
from .errors import CalibrationWarning, HypercalError
from .geometric import (
    SensorModel,
    estimate_scale_from_target,
    read_sensor_model,
    rescale_aspect,
    resample_across_track,
    v_profile,
)
from .noise import denoise_spatial_median, denoise_spectral, estimate_snr, frame_average
from .planner import (
    FocusSeries,
    SpectralCurve,
    focus_curves,
    integration_multiplier,
    recommend_integration,
    sharpness,
    system_efficiency,
)
from .radiometric import (
    DarkFrame,
    FlatField,
    LinearCalibration,
    ReferencePanel,
    Roi,
    apply_flat_field,
    apply_linear_calibration,
    build_flat_field,
    calibrate_full_field,
    estimate_dark,
    fit_multi_target,
    measure_panel,
    single_target_reflectance,
    subtract_dark,
)
from .registration import Strip, StripLayout, Translation2D, coregister, estimate_translation, mosaic, resample_to_reference
from .skewnorm import SkewNormalFit, fit_skew_normal, fit_skew_normal_batch
from .pipeline import run_pipeline, validate_manifest
