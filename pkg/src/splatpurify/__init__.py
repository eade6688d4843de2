"""Per-view contribution analysis, feature clustering and adaptive pruning
for 3D Gaussian splat scenes."""

from .cameras import CameraView, ViewSet, load_views, orbit_views, pixel_ray, save_views
from .clustering import (
    HDBSCAN,
    ClusterAssignment,
    ClusterParams,
    FeatureMatrix,
    build_features,
    cluster_features,
    cluster_mean_weights,
    export_clusters_ply,
)
from .metrics import ScoreInputs, psnr, score, ssim
from .ply_io import PlyFormatError, load_ply, save_ply
from .purify import (
    PruneThresholds,
    PurificationReport,
    WatermarkPurifier,
    feature_scale,
    noise_inject,
    purify,
    random_prune,
)
from .renderer import (
    ContributionReport,
    RenderOutput,
    Splat2D,
    accumulate_weights,
    intersection_energy,
    project,
    render,
    render_oracle,
)
from .splats import (
    DegeneratePrimitiveError,
    GaussianPrimitive,
    SplatCloud,
    covariance,
    evaluate_gaussian,
)
from .synth import PurificationSummary, SyntheticScene, evaluate_purification, make_scene

__version__ = "0.1.0"

__all__ = [
    "CameraView",
    "ClusterAssignment",
    "ClusterParams",
    "ContributionReport",
    "DegeneratePrimitiveError",
    "FeatureMatrix",
    "GaussianPrimitive",
    "HDBSCAN",
    "PlyFormatError",
    "PruneThresholds",
    "PurificationReport",
    "PurificationSummary",
    "RenderOutput",
    "ScoreInputs",
    "Splat2D",
    "SplatCloud",
    "SyntheticScene",
    "ViewSet",
    "WatermarkPurifier",
    "accumulate_weights",
    "build_features",
    "cluster_features",
    "cluster_mean_weights",
    "covariance",
    "evaluate_gaussian",
    "evaluate_purification",
    "export_clusters_ply",
    "feature_scale",
    "intersection_energy",
    "load_ply",
    "load_views",
    "make_scene",
    "noise_inject",
    "orbit_views",
    "pixel_ray",
    "project",
    "psnr",
    "purify",
    "random_prune",
    "render",
    "render_oracle",
    "save_ply",
    "save_views",
    "score",
    "ssim",
]
