"""Standardized geometric features and cluster assignment for splat clouds.

Feature vectors concatenate z-scored position (3), activated opacity (1)
and view-accumulated weight (1); clustering runs the HDBSCAN engine on the
resulting K x 5 matrix with Euclidean distances and excess-of-mass
extraction.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils import check_array

from .hdbscan import NOISE, hdbscan_labels
from .renderer import ContributionReport
from .splats import SplatCloud

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int
    min_samples: int = 10
    selection: str = "excess-of-mass"
    mst_algorithm: str = "auto"
    knn_k: int = 32

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.selection != "excess-of-mass":
            raise ValueError("only excess-of-mass extraction is supported")

    @classmethod
    def defaults_for(cls, n_primitives: int) -> "ClusterParams":
        """Scale-aware defaults: watermark structures are large coherent
        blobs, so small clusters are treated as noise."""
        return cls(min_cluster_size=max(50, int(np.ceil(0.001 * n_primitives))), min_samples=10)

    def to_dict(self) -> dict:
        return {
            "min_cluster_size": self.min_cluster_size,
            "min_samples": self.min_samples,
            "selection": self.selection,
            "mst_algorithm": self.mst_algorithm,
            "knn_k": self.knn_k,
        }


@dataclass(frozen=True)
class FeatureMatrix:
    """K x 5 standardized features plus the standardization constants."""

    values: np.ndarray
    position_mean: np.ndarray
    position_std: np.ndarray
    opacity_mean: float
    opacity_std: float
    weight_mean: float
    weight_std: float

    def __len__(self) -> int:
        return len(self.values)


def _zscore(column: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = column.mean(axis=0)
    std = column.std(axis=0)
    std = np.where(std < SIGMA_FLOOR, 1.0, std)
    return (column - mean) / std, mean, std


def build_features(cloud: SplatCloud, report: ContributionReport) -> FeatureMatrix:
    """Standardize per axis; constant columns become all zeros."""
    if len(report) != len(cloud):
        raise ValueError(f"report length {len(report)} != cloud size {len(cloud)}")
    if len(cloud) < 2:
        raise ValueError("need at least 2 primitives to standardize features")
    pos, mu_p, sigma_p = _zscore(cloud.positions.astype(np.float64))
    opa, mu_a, sigma_a = _zscore(cloud.opacities)
    wgt, mu_w, sigma_w = _zscore(report.omega)
    values = np.concatenate([pos, opa[:, None], wgt[:, None]], axis=1)
    if not np.all(np.isfinite(values)):
        raise ValueError("features contain NaN or Inf")
    return FeatureMatrix(
        values=values,
        position_mean=mu_p,
        position_std=sigma_p,
        opacity_mean=float(mu_a),
        opacity_std=float(sigma_a),
        weight_mean=float(mu_w),
        weight_std=float(sigma_w),
    )


def cluster_features(features: FeatureMatrix, params: ClusterParams) -> np.ndarray:
    """HDBSCAN labels for the feature matrix; -1 marks noise.

    Fewer points than min_cluster_size cannot form any cluster, so the
    whole input is labeled noise (with a warning) rather than failing.
    """
    k = len(features)
    if k < params.min_cluster_size:
        warnings.warn(
            f"{k} points cannot form a cluster of size >= {params.min_cluster_size}; "
            "labeling everything noise",
            RuntimeWarning,
            stacklevel=2,
        )
        return np.full(k, NOISE, dtype=np.int64)
    return hdbscan_labels(
        features.values,
        params.min_cluster_size,
        min(params.min_samples, k - 1),
        mst_algorithm=params.mst_algorithm,
        knn_k=params.knn_k,
    )


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-primitive labels plus per-cluster weight summaries.

    labels[k] is -1 for noise or a cluster id in 0..M-1;
    cluster_mean_weight[i] is the mean view-accumulated weight over the
    members of cluster i.
    """

    labels: np.ndarray
    cluster_mean_weight: np.ndarray
    cluster_sizes: np.ndarray
    params: ClusterParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(
            self, "cluster_mean_weight", np.asarray(self.cluster_mean_weight, dtype=np.float64)
        )
        object.__setattr__(self, "cluster_sizes", np.asarray(self.cluster_sizes, dtype=np.int64))

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_mean_weight)

    def noise_mask(self) -> np.ndarray:
        return self.labels == NOISE

    def to_dict(self) -> dict:
        out = {
            "labels": self.labels.tolist(),
            "cluster_mean_weight": self.cluster_mean_weight.tolist(),
            "cluster_sizes": self.cluster_sizes.tolist(),
        }
        if self.params is not None:
            out["params"] = self.params.to_dict()
        return out


def cluster_mean_weights(
    labels: np.ndarray,
    report: ContributionReport,
    params: ClusterParams | None = None,
) -> ClusterAssignment:
    """Complete an assignment with per-cluster mean weights (noise
    excluded)."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(report):
        raise ValueError(f"labels length {len(labels)} != report length {len(report)}")
    n_clusters = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
    means = np.empty(n_clusters)
    sizes = np.empty(n_clusters, dtype=np.int64)
    for c in range(n_clusters):
        members = labels == c
        sizes[c] = int(members.sum())
        if sizes[c] == 0:
            raise ValueError(f"cluster {c} has no members")
        means[c] = report.omega[members].mean()
    return ClusterAssignment(
        labels=labels, cluster_mean_weight=means, cluster_sizes=sizes, params=params
    )


def export_clusters_ply(cloud: SplatCloud, assignment: ClusterAssignment, path) -> None:
    """Write a degree-0 copy of the cloud recolored by preservation rank.

    Clusters are ranked by ascending mean weight (rank 0 = first to go);
    low ranks are red, high ranks green, noise gray.
    """
    from .ply_io import save_ply
    from .sh import rgb_to_dc

    order = np.argsort(assignment.cluster_mean_weight, kind="stable")
    rank = np.empty(assignment.n_clusters)
    rank[order] = np.arange(assignment.n_clusters)
    denom = max(assignment.n_clusters - 1, 1)

    colors = np.full((len(cloud), 3), 0.5)
    clustered = ~assignment.noise_mask()
    frac = rank[assignment.labels[clustered]] / denom
    colors[clustered] = np.stack([1.0 - frac, frac, np.full_like(frac, 0.1)], axis=1)

    recolored = SplatCloud(
        positions=cloud.positions,
        rotations=cloud.rotations,
        log_scales=cloud.log_scales,
        opacity_logits=cloud.opacity_logits,
        sh_coeffs=rgb_to_dc(colors)[:, None, :],
        sh_degree=0,
    )
    save_ply(recolored, path)


class HDBSCAN(BaseEstimator, ClusterMixin):
    """sklearn-style front end for the clustering engine.

    Parameters mirror ClusterParams; after fit, `labels_` holds the
    cluster labels with -1 for noise.
    """

    def __init__(
        self,
        min_cluster_size: int = 50,
        min_samples: int = 10,
        mst_algorithm: str = "auto",
        knn_k: int = 32,
        allow_single_cluster: bool = False,
    ):
        self.min_cluster_size = min_cluster_size
        self.min_samples = min_samples
        self.mst_algorithm = mst_algorithm
        self.knn_k = knn_k
        self.allow_single_cluster = allow_single_cluster

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.labels_ = hdbscan_labels(
            X,
            self.min_cluster_size,
            min(self.min_samples, len(X) - 1),
            mst_algorithm=self.mst_algorithm,
            knn_k=self.knn_k,
            allow_single_cluster=self.allow_single_cluster,
        )
        return self
