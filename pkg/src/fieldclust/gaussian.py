"""Diagonal-covariance Gaussian cluster models.

Every cluster in the hierarchical-type engines is summarised by a
diagonal Gaussian.  This module owns the maximum-likelihood fit, log
densities, the symmetric Kullback-Leibler (KL2) distance used to rank
merge candidates, and the BIC-style merge gain used as the stopping
criterion.  All functions are pure; clusters are immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

# Variance floor applied after every fit.  Keeps singleton clusters valid
# Gaussians; note that a floored variance makes their density enormous.
EPS_VAR = 1e-6


@dataclass(frozen=True)
class GaussianCluster:
    """Diagonal Gaussian summary of the samples a cluster owns."""

    id: int
    mean: np.ndarray
    variance: np.ndarray
    count: int
    members: frozenset[int]

    def __post_init__(self):
        self.mean.setflags(write=False)
        self.variance.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _as_matrix(samples) -> np.ndarray:
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError("samples must be a list of equal-length vectors")
    return X


def fit_gaussian(samples, cluster_id: int = 0,
                 members: Iterable[int] | None = None) -> GaussianCluster:
    """ML-fit a diagonal Gaussian: per-coordinate mean and population
    variance, floored at EPS_VAR.

    ``members`` names the owned sample ids; defaults to 0..n-1.
    """
    X = _as_matrix(samples)
    if X.shape[0] == 0:
        raise ValueError("empty cluster")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    mean = X.mean(axis=0)
    variance = np.maximum(X.var(axis=0), EPS_VAR)
    if members is None:
        members = range(X.shape[0])
    members = frozenset(members)
    if len(members) != X.shape[0]:
        raise ValueError("members must match the sample count")
    return GaussianCluster(id=cluster_id, mean=mean, variance=variance,
                           count=X.shape[0], members=members)


def log_likelihood(cluster: GaussianCluster, x) -> float:
    """Log density of ``x`` under the cluster's diagonal Gaussian."""
    x = np.asarray(x, dtype=float)
    if x.shape != cluster.mean.shape:
        raise ValueError(
            f"dimension mismatch: {x.shape} vs {cluster.mean.shape}")
    v = cluster.variance
    return float(np.sum(
        -0.5 * (np.log(2.0 * np.pi * v) + (x - cluster.mean) ** 2 / v)))


def log_likelihood_rows(mean: np.ndarray, variance: np.ndarray,
                        X: np.ndarray) -> np.ndarray:
    """Vectorised ``log_likelihood`` for each row of ``X``.

    Same per-element formula and reduction as the scalar form, so the
    two agree bit-for-bit.
    """
    return np.sum(
        -0.5 * (np.log(2.0 * np.pi * variance) + (X - mean) ** 2 / variance),
        axis=-1)


def log_likelihood_matrix(means: np.ndarray, variances: np.ndarray,
                          X: np.ndarray) -> np.ndarray:
    """(n, K) log densities of every row of ``X`` under every cluster."""
    # (n, K, d) broadcast; last axis contiguous so the reduction matches
    # the scalar path bitwise.
    diff = X[:, None, :] - means[None, :, :]
    term = -0.5 * (np.log(2.0 * np.pi * variances)[None, :, :]
                   + diff ** 2 / variances[None, :, :])
    return np.sum(term, axis=-1)


def _kl_terms(m1, v1, m2, v2):
    # directed KL(1||2) summands per coordinate, closed form for
    # diagonal Gaussians
    return 0.5 * np.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / (2.0 * v2) - 0.5


def kl2_distance(a: GaussianCluster, b: GaussianCluster) -> float:
    """Symmetric KL distance: KL(a||b) + KL(b||a)."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    forward = float(np.sum(_kl_terms(a.mean, a.variance, b.mean, b.variance)))
    backward = float(np.sum(_kl_terms(b.mean, b.variance, a.mean, a.variance)))
    return forward + backward


def kl2_matrix(means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """(K, K) symmetric KL distances between all cluster pairs.

    Entry [i, j] equals ``kl2_distance`` of clusters i and j bit-for-bit.
    """
    m1 = means[:, None, :]
    v1 = variances[:, None, :]
    m2 = means[None, :, :]
    v2 = variances[None, :, :]
    forward = np.sum(_kl_terms(m1, v1, m2, v2), axis=-1)
    return forward + forward.T


def _gather(data: Mapping[int, np.ndarray], members: frozenset[int]) -> np.ndarray:
    return np.array([data[i] for i in sorted(members)], dtype=float)


def cluster_log_likelihood(cluster: GaussianCluster,
                           data: Mapping[int, np.ndarray]) -> float:
    """Total log density of the cluster's own members under its Gaussian."""
    X = _gather(data, cluster.members)
    return float(np.sum(log_likelihood_rows(cluster.mean, cluster.variance, X)))


def merge_gain(a: GaussianCluster, b: GaussianCluster,
               data: Mapping[int, np.ndarray], lam: float = 1.0) -> float:
    """BIC gain of merging two clusters; the merge is worthwhile iff the
    result is negative.

    gain = [logL(a) + logL(b) - logL(merged)] - (lam/2) * p * log(n_a+n_b)
    with p = 2d, the parameter count of one diagonal Gaussian.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if a.members & b.members:
        raise ValueError("clusters share members")
    merged = fit_gaussian(_gather(data, a.members | b.members),
                          cluster_id=min(a.id, b.id),
                          members=a.members | b.members)
    delta_ll = (cluster_log_likelihood(a, data)
                + cluster_log_likelihood(b, data)
                - cluster_log_likelihood(merged, data))
    p = 2 * a.dim
    penalty = 0.5 * lam * p * np.log(a.count + b.count)
    return delta_ll - penalty
