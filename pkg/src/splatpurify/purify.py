"""Adaptive pruning of low-contribution clusters, plus the simple
whole-cloud baselines (random pruning, feature scaling, noise injection).

A primitive is pruned when its cluster's mean weight falls strictly below
global_mean / tau_c, or, for noise points, when its own weight falls
strictly below global_mean / tau_n.  Equality keeps the primitive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .clustering import (
    ClusterAssignment,
    ClusterParams,
    build_features,
    cluster_features,
    cluster_mean_weights,
)
from .hdbscan import NOISE
from .renderer import ContributionReport, accumulate_weights
from .splats import SplatCloud, inverse_sigmoid, sigmoid

DEFAULT_TAU_C = 4.0
DEFAULT_TAU_N = 4.0
OPACITY_CLIP = 1e-6


@dataclass(frozen=True)
class PruneThresholds:
    tau_c: float = DEFAULT_TAU_C
    tau_n: float = DEFAULT_TAU_N

    def __post_init__(self):
        for name, value in (("tau_c", self.tau_c), ("tau_n", self.tau_n)):
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and positive, got {value}")


@dataclass(frozen=True)
class PurificationReport:
    pruned_indices: np.ndarray  # sorted
    kept_count: int
    pruned_count: int
    global_mean_weight: float
    cluster_mean_weight: np.ndarray  # (M,)
    cluster_pruned: np.ndarray  # (M,) bool
    cluster_threshold: float  # global_mean / tau_c
    noise_threshold: float  # global_mean / tau_n
    noise_count: int
    noise_pruned_count: int
    thresholds: PruneThresholds

    def __post_init__(self):
        object.__setattr__(
            self, "pruned_indices", np.asarray(self.pruned_indices, dtype=np.int64)
        )
        if self.pruned_count != len(self.pruned_indices):
            raise ValueError("pruned_count inconsistent with pruned_indices")

    def to_dict(self) -> dict:
        return {
            "pruned_indices": self.pruned_indices.tolist(),
            "kept_count": self.kept_count,
            "pruned_count": self.pruned_count,
            "global_mean_weight": self.global_mean_weight,
            "cluster_threshold": self.cluster_threshold,
            "noise_threshold": self.noise_threshold,
            "clusters": [
                {
                    "cluster": i,
                    "mean_weight": float(self.cluster_mean_weight[i]),
                    "pruned": bool(self.cluster_pruned[i]),
                }
                for i in range(len(self.cluster_mean_weight))
            ],
            "noise_count": self.noise_count,
            "noise_pruned_count": self.noise_pruned_count,
            "tau_c": self.thresholds.tau_c,
            "tau_n": self.thresholds.tau_n,
        }


def prune_mask(
    labels: np.ndarray,
    cluster_mean_weight: np.ndarray,
    omega: np.ndarray,
    global_mean: float,
    thresholds: PruneThresholds,
) -> np.ndarray:
    """Boolean mask of primitives to remove, straight from the rule."""
    labels = np.asarray(labels)
    mask = np.zeros(len(labels), dtype=bool)
    noise = labels == NOISE
    mask[noise] = omega[noise] < global_mean / thresholds.tau_n
    clustered = ~noise
    cluster_kill = cluster_mean_weight < global_mean / thresholds.tau_c
    mask[clustered] = cluster_kill[labels[clustered]]
    return mask


def purify(
    cloud: SplatCloud,
    assignment: ClusterAssignment,
    report: ContributionReport,
    thresholds: PruneThresholds = PruneThresholds(),
) -> tuple[SplatCloud, PurificationReport]:
    """Remove low-contribution clusters and noise points.

    Survivors keep their original relative order.  The global mean weight
    is taken over all primitives before pruning, noise included.
    """
    k = len(cloud)
    if len(assignment.labels) != k or len(report) != k:
        raise ValueError(
            f"inconsistent lengths: cloud {k}, labels {len(assignment.labels)}, "
            f"report {len(report)}"
        )
    global_mean = report.global_mean
    mask = prune_mask(
        assignment.labels, assignment.cluster_mean_weight, report.omega, global_mean, thresholds
    )
    if mask.all():
        raise ValueError(
            f"pruning removed every primitive (tau_c={thresholds.tau_c}, "
            f"tau_n={thresholds.tau_n}, mean weight {global_mean:.3g})"
        )
    noise = assignment.noise_mask()
    purified = cloud.take(np.flatnonzero(~mask))
    report_out = PurificationReport(
        pruned_indices=np.flatnonzero(mask),
        kept_count=int((~mask).sum()),
        pruned_count=int(mask.sum()),
        global_mean_weight=global_mean,
        cluster_mean_weight=assignment.cluster_mean_weight,
        cluster_pruned=assignment.cluster_mean_weight < global_mean / thresholds.tau_c,
        cluster_threshold=global_mean / thresholds.tau_c,
        noise_threshold=global_mean / thresholds.tau_n,
        noise_count=int(noise.sum()),
        noise_pruned_count=int(mask[noise].sum()),
        thresholds=thresholds,
    )
    return purified, report_out


def random_prune(cloud: SplatCloud, ratio: float, seed: int) -> SplatCloud:
    """Remove a uniform sample of floor(ratio * K) primitives."""
    if not 0 <= ratio < 1:
        raise ValueError(f"ratio must be in [0, 1), got {ratio}")
    k = len(cloud)
    n_remove = int(ratio * k)
    if n_remove == 0:
        return cloud.copy()
    rng = np.random.default_rng(seed)
    removed = rng.choice(k, size=n_remove, replace=False)
    keep = np.ones(k, dtype=bool)
    keep[removed] = False
    return cloud.take(np.flatnonzero(keep))


def feature_scale(cloud: SplatCloud, color_gain: float, opacity_gain: float) -> SplatCloud:
    """Scale SH color coefficients and the activated opacity.

    Opacity is scaled after activation (scaling a logit is meaningless)
    and re-encoded; the product is clipped away from {0, 1} so the logit
    stays finite.
    """
    if color_gain <= 0 or opacity_gain <= 0:
        raise ValueError("gains must be positive")
    out = cloud.copy()
    out.sh_coeffs = (out.sh_coeffs.astype(np.float64) * color_gain).astype(np.float32)
    scaled = np.clip(
        sigmoid(cloud.opacity_logits.astype(np.float64)) * opacity_gain,
        OPACITY_CLIP,
        1.0 - OPACITY_CLIP,
    )
    out.opacity_logits = inverse_sigmoid(scaled).astype(np.float32)
    return out


def noise_inject(cloud: SplatCloud, sigma: float, seed: int) -> SplatCloud:
    """Add i.i.d. zero-mean Gaussian noise to every SH coefficient."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    out = cloud.copy()
    if sigma > 0:
        rng = np.random.default_rng(seed)
        noisy = out.sh_coeffs.astype(np.float64) + rng.normal(0.0, sigma, out.sh_coeffs.shape)
        out.sh_coeffs = noisy.astype(np.float32)
    return out


class WatermarkPurifier(BaseEstimator, TransformerMixin):
    """End-to-end purifier with an estimator interface.

    fit(cloud, views) runs the weight pass, feature construction and
    clustering; transform(cloud) returns the pruned cloud.  Fitted state:
    contribution_report_, features_, assignment_, purification_report_.
    """

    def __init__(
        self,
        tau_c: float = DEFAULT_TAU_C,
        tau_n: float = DEFAULT_TAU_N,
        min_cluster_size: int | None = None,
        min_samples: int = 10,
        max_workers: int = 0,
    ):
        self.tau_c = tau_c
        self.tau_n = tau_n
        self.min_cluster_size = min_cluster_size
        self.min_samples = min_samples
        self.max_workers = max_workers

    def _cluster_params(self, n_primitives: int) -> ClusterParams:
        if self.min_cluster_size is None:
            base = ClusterParams.defaults_for(n_primitives)
            return ClusterParams(base.min_cluster_size, self.min_samples)
        return ClusterParams(self.min_cluster_size, self.min_samples)

    def fit(self, X: SplatCloud, y=None):
        views = y
        if views is None:
            raise ValueError("fit requires the view set as y")
        self.contribution_report_ = accumulate_weights(X, views, max_workers=self.max_workers)
        self.features_ = build_features(X, self.contribution_report_)
        params = self._cluster_params(len(X))
        labels = cluster_features(self.features_, params)
        self.assignment_ = cluster_mean_weights(labels, self.contribution_report_, params)
        self.n_fitted_ = len(X)
        return self

    def transform(self, X: SplatCloud) -> SplatCloud:
        if not hasattr(self, "assignment_"):
            raise ValueError("purifier is not fitted")
        if len(X) != self.n_fitted_:
            raise ValueError("transform input must be the cloud the purifier was fitted on")
        purified, self.purification_report_ = purify(
            X,
            self.assignment_,
            self.contribution_report_,
            PruneThresholds(tau_c=self.tau_c, tau_n=self.tau_n),
        )
        return purified
