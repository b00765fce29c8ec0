"""Dirichlet process Gaussian mixture clustering via collapsed Gibbs.

Each sweep revisits every sample, removes it from its cluster, and
redraws its assignment from the Chinese-restaurant-process conditional:
an existing cluster is weighted by its size times the posterior
predictive density of the sample, a new cluster by the aggregation
parameter alpha times the prior predictive density.  A per-coordinate
Normal-Inverse-Gamma prior keeps everything conjugate and consistent
with the diagonal cluster model used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from fieldclust.clustering import Partition, Sample
from fieldclust.gaussian import fit_gaussian


@dataclass(frozen=True)
class NigPrior:
    """Per-coordinate Normal-Inverse-Gamma hyperparameters."""

    m0: np.ndarray      # prior mean, length d
    kappa0: float       # prior strength on the mean
    a0: float           # inverse-gamma shape
    b0: np.ndarray      # inverse-gamma scale, length d

    def __post_init__(self):
        if self.kappa0 <= 0 or self.a0 <= 0 or np.any(self.b0 <= 0):
            raise ValueError("kappa0, a0 and b0 must be positive")


@dataclass
class DpgmmConfig:
    alpha: float = 1.0
    sweeps: int = 100
    seed: int = 0
    prior: NigPrior | None = None   # default fitted to the data
    init_clusters: int = 300

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.init_clusters < 1:
            raise ValueError("init_clusters must be >= 1")


def default_prior(X: np.ndarray) -> NigPrior:
    """Weakly informative, scale-adaptive prior: data mean, kappa0 0.01,
    shape 1, per-coordinate data variance as scale."""
    var = X.var(axis=0)
    return NigPrior(m0=X.mean(axis=0), kappa0=0.01, a0=1.0,
                    b0=np.maximum(var, 1e-12))


def _student_t_logpdf(x, df, loc, scale_sq):
    # per-coordinate log density of the location-scale Student-t
    z_sq = (x - loc) ** 2 / scale_sq
    return (gammaln((df + 1.0) / 2.0) - gammaln(df / 2.0)
            - 0.5 * np.log(df * np.pi * scale_sq)
            - (df + 1.0) / 2.0 * np.log1p(z_sq / df))


class CollapsedGibbsSampler:
    """Sampler state: per-cluster sufficient statistics in fixed slots.

    Samples are visited in the order given, so the scan order (and hence
    the exact draw sequence for a fixed seed) follows the input.
    """

    def __init__(self, X: np.ndarray, config: DpgmmConfig):
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite feature values")
        self.X = X
        n, d = X.shape
        self.prior = config.prior if config.prior is not None else default_prior(X)
        if self.prior.m0.shape != (d,) or self.prior.b0.shape != (d,):
            raise ValueError("prior dimensions do not match the data")
        self.alpha = config.alpha
        self.rng = np.random.default_rng(config.seed)
        cap = n
        self.counts = np.zeros(cap, dtype=np.int64)
        self.sums = np.zeros((cap, d))
        self.sumsqs = np.zeros((cap, d))
        self.z = np.empty(n, dtype=np.int64)
        k = min(config.init_clusters, n)
        for i in range(n):
            self._insert(i, i % k)

    def _insert(self, i: int, slot: int) -> None:
        self.z[i] = slot
        self.counts[slot] += 1
        self.sums[slot] += self.X[i]
        self.sumsqs[slot] += self.X[i] ** 2

    def _remove(self, i: int) -> None:
        slot = self.z[i]
        self.counts[slot] -= 1
        self.sums[slot] -= self.X[i]
        self.sumsqs[slot] -= self.X[i] ** 2
        if self.counts[slot] == 0:
            # clear accumulated roundoff so the slot restarts clean
            self.sums[slot] = 0.0
            self.sumsqs[slot] = 0.0

    def _posterior_predictive(self, slots: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Log predictive density of ``x`` under each slot's posterior."""
        p = self.prior
        n = self.counts[slots].astype(float)[:, None]
        s = self.sums[slots]
        ss = self.sumsqs[slots]
        mean = s / n
        within = np.maximum(ss - s ** 2 / n, 0.0)
        kappa_n = p.kappa0 + n
        m_n = (p.kappa0 * p.m0 + s) / kappa_n
        a_n = p.a0 + n / 2.0
        b_n = p.b0 + 0.5 * within + (p.kappa0 * n * (mean - p.m0) ** 2) / (2.0 * kappa_n)
        scale_sq = b_n * (kappa_n + 1.0) / (a_n * kappa_n)
        return np.sum(_student_t_logpdf(x, 2.0 * a_n, m_n, scale_sq), axis=-1)

    def _prior_predictive(self, x: np.ndarray) -> float:
        p = self.prior
        scale_sq = p.b0 * (p.kappa0 + 1.0) / (p.a0 * p.kappa0)
        return float(np.sum(_student_t_logpdf(x, 2.0 * p.a0, p.m0, scale_sq)))

    def assignment_probabilities(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """CRP conditional for sample ``i`` (already removed): candidate
        slots (active slots then one fresh slot) and their probabilities."""
        x = self.X[i]
        active = np.flatnonzero(self.counts > 0)
        fresh = int(np.flatnonzero(self.counts == 0)[0])
        logw = np.empty(len(active) + 1)
        logw[:-1] = np.log(self.counts[active].astype(float))
        logw[:-1] += self._posterior_predictive(active, x)
        logw[-1] = np.log(self.alpha) + self._prior_predictive(x)
        probs = np.exp(logw - logsumexp(logw))
        probs /= probs.sum()
        return np.append(active, fresh), probs

    def sweep(self) -> None:
        for i in range(self.X.shape[0]):
            self._remove(i)
            slots, probs = self.assignment_probabilities(i)
            u = self.rng.random()
            pick = int(np.searchsorted(np.cumsum(probs), u, side="right"))
            pick = min(pick, len(slots) - 1)
            self._insert(i, int(slots[pick]))

    def n_clusters(self) -> int:
        return int(np.count_nonzero(self.counts))


def cluster_dpgmm(samples: Sequence[Sample], config: DpgmmConfig) -> Partition:
    """Run the sampler and return the final sweep's partition, with a
    fitted Gaussian for every surviving cluster."""
    if not samples:
        raise ValueError("no samples")
    ids = [s.id for s in samples]
    X = np.array([s.features for s in samples], dtype=float)
    sampler = CollapsedGibbsSampler(X, config)
    for _ in range(config.sweeps):
        sampler.sweep()

    # relabel clusters 0..K-1 by their smallest member id
    slot_members: dict[int, list[int]] = {}
    for row, slot in enumerate(sampler.z):
        slot_members.setdefault(int(slot), []).append(row)
    ordered = sorted(slot_members.values(), key=lambda rows: min(ids[r] for r in rows))
    assignment: dict[int, int] = {}
    clusters = {}
    for cid, rows in enumerate(ordered):
        member_ids = [ids[r] for r in rows]
        for sid in member_ids:
            assignment[sid] = cid
        clusters[cid] = fit_gaussian(X[rows], cluster_id=cid, members=member_ids)
    part = Partition(assignment, clusters)
    part.meta.update(sweeps=config.sweeps, alpha=config.alpha)
    return part
