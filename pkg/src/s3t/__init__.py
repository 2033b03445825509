"""Score-based surveillance of spatio-temporally correlated change signals.

The package detects the emergence of a correlated signal in multivariate
Gaussian noise, offline (fixed sample) or online (streaming window), with
analytic calibration of the detection threshold: a significance-level
approximation for the offline max statistic and an average-run-length
approximation for the online stopping rule, both Monte Carlo verifiable
through the bundled simulation harness.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibrationResult,
    ChangeOfMeasure,
    arl,
    curvature,
    find_threshold,
    h_term,
    mu_drift,
    nu,
    psi,
    psi_prime,
    significance_level,
    solve_xi0,
)
from .detectors import (
    BaselineParams,
    Monitor,
    OfflineDecision,
    PatchScanResult,
    offline_detect,
    patch_scan,
)
from .score import (
    ModelSpec,
    SpatialGram,
    StatValue,
    efficient_score,
    precompute_spatial,
    quadratic_score,
    s3t_statistic,
    trace_constants,
)
from .simulate import (
    ExperimentReport,
    SignalParams,
    calibrate_threshold_sim,
    estimate_arl,
    estimate_edd,
    estimate_sl,
    gen_null,
    gen_signal,
)
from .spatial import (
    SensorLayout,
    SpatialModel,
    correlation,
    correlation_matrix,
    grid_layout,
    read_layout_csv,
)
from .stream_network import (
    Location,
    Segment,
    StreamNetwork,
    TailUpParams,
    random_binary_network,
    read_network,
    tailup_covariance,
)
from .temporal import TemporalGram, TemporalModel, stacked_signal_cov, temporal_gram

__all__ = [
    "__version__",
    "arl",
    "BaselineParams",
    "CalibrationResult",
    "calibrate_threshold_sim",
    "ChangeOfMeasure",
    "correlation",
    "correlation_matrix",
    "curvature",
    "efficient_score",
    "estimate_arl",
    "estimate_edd",
    "estimate_sl",
    "ExperimentReport",
    "find_threshold",
    "gen_null",
    "gen_signal",
    "grid_layout",
    "h_term",
    "Location",
    "ModelSpec",
    "Monitor",
    "mu_drift",
    "nu",
    "OfflineDecision",
    "offline_detect",
    "patch_scan",
    "PatchScanResult",
    "precompute_spatial",
    "psi",
    "psi_prime",
    "quadratic_score",
    "random_binary_network",
    "read_layout_csv",
    "read_network",
    "s3t_statistic",
    "Segment",
    "SensorLayout",
    "significance_level",
    "SignalParams",
    "solve_xi0",
    "SpatialGram",
    "SpatialModel",
    "stacked_signal_cov",
    "StatValue",
    "StreamNetwork",
    "tailup_covariance",
    "TailUpParams",
    "TemporalGram",
    "TemporalModel",
    "temporal_gram",
    "trace_constants",
]
