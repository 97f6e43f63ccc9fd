"""Geographically weighted regression and a route map for choosing between
global, mixed and multiscale models."""

from .dataset import (
    INTERCEPT,
    DistanceMatrix,
    ScalingRecord,
    SpatialDataset,
    TransformRecord,
    apply_transform,
    center,
    distance_matrix,
    load_csv,
    replay_transforms,
)
from .diagnostics import (
    build_weight_matrix,
    global_collinearity,
    gw_correlation,
    local_collinearity,
    morans_i,
    standardized_residuals,
)
from .global_models import GlobalFit, fit_ols, fit_sam
from .gwr import (
    BandwidthCurve,
    GwrFit,
    bandwidth_curve,
    cv_score,
    fit_gwr,
    local_fit,
    optimize_bandwidth,
)
from .kernel import Bandwidth, KernelSpec, kernel_weight, weights_for_location
from .routemap import (
    BandwidthClassification,
    RouteMapConfig,
    RouteMapReport,
    classify_bandwidths,
    recommend,
    run_routemap,
    surface_disagreement,
)
from .synth import SurfaceSpec, coefficient_rmse, generate_svc
from .variants import MsGwrFit, MxGwrFit, fit_msgwr, fit_mxgwr, msgwr_fixed_bandwidths

__version__ = "0.1.0"

__all__ = [
    "INTERCEPT", "DistanceMatrix", "ScalingRecord", "SpatialDataset", "TransformRecord",
    "apply_transform", "center", "distance_matrix", "load_csv", "replay_transforms",
    "build_weight_matrix", "global_collinearity", "gw_correlation", "local_collinearity",
    "morans_i", "standardized_residuals", "GlobalFit", "fit_ols", "fit_sam", "BandwidthCurve",
    "GwrFit", "bandwidth_curve", "cv_score", "fit_gwr", "local_fit", "optimize_bandwidth",
    "Bandwidth", "KernelSpec", "kernel_weight", "weights_for_location",
    "BandwidthClassification", "RouteMapConfig", "RouteMapReport", "classify_bandwidths",
    "recommend", "run_routemap", "surface_disagreement", "SurfaceSpec", "coefficient_rmse",
    "generate_svc", "MsGwrFit", "MxGwrFit", "fit_msgwr", "fit_mxgwr", "msgwr_fixed_bandwidths",
]
