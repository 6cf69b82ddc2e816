"""Photon-efficient single-photon imaging.

Simulate photon-counting LIDAR frames at about one detection per pixel and
reconstruct reflectivity and depth by penalized maximum likelihood with
total-variation regularization and neighbourhood-based background censoring.
"""
from .bounds import (
    Estimate,
    crlb_depth,
    crlb_reflectivity,
    mc_depth_mse_gaussian,
    mc_poisson_limit_mse,
    ml_bias_test,
    mse_depth_gaussian,
    poisson_limit_ml_reflectivity,
    poisson_limit_mse,
)
from .censor import censor_detections, rom_times
from .metrics import psnr, rmse, sbr
from .model import (
    SPEED_OF_LIGHT,
    CensorMask,
    DetectionFrame,
    GaussianPulse,
    InstrumentConfig,
    LowFluxWarning,
    SampledPulse,
    Scene,
    count_pmf,
    detection_time_pdf,
    p_no_detect,
    rate_function,
    signal_probability,
)
from .pixelwise import (
    Imputation,
    cml_reflectivity,
    histogram_depth,
    impute_missing,
    log_matched_filter_depth,
    normalized_count_reflectivity,
)
from .pml import (
    DEFAULT_BETA_ALPHA,
    DEFAULT_BETA_Z,
    SolverSettings,
    pml_depth,
    pml_reflectivity,
)
from .scenes import calibrate_instrument, make_scene
from .simulator import simulate_frame, simulate_ground_truth_frame

__version__ = "0.1.0"
