"""Affinity propagation clustering.

Exemplars emerge from damped responsibility/availability message
passing over a similarity matrix (negative squared Euclidean distance,
self-similarity set to the preference).  No randomness: ties break by
lowest index and runs are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fieldclust.clustering import Partition, Sample
from fieldclust.gaussian import fit_gaussian


@dataclass
class ApConfig:
    damping: float = 0.5
    max_iters: int = 200
    convergence_window: int = 15
    preference: float | str = "median"

    def __post_init__(self):
        if not 0.5 <= self.damping < 1.0:
            raise ValueError("damping must be in [0.5, 1)")
        if not self.max_iters >= self.convergence_window >= 1:
            raise ValueError("need max_iters >= convergence_window >= 1")
        if isinstance(self.preference, str) and self.preference != "median":
            raise ValueError("preference must be a number or 'median'")


def similarity_matrix(X: np.ndarray, preference: float | str) -> np.ndarray:
    """Pairwise -||xi - xk||^2 with the preference on the diagonal."""
    sq = np.sum(X ** 2, axis=1)
    S = -(sq[:, None] + sq[None, :] - 2.0 * X @ X.T)
    n = S.shape[0]
    if preference == "median":
        off = S[~np.eye(n, dtype=bool)]
        pref = float(np.median(off)) if off.size else 0.0
    else:
        pref = float(preference)
    np.fill_diagonal(S, pref)
    return S


def _message_pass(S: np.ndarray, config: ApConfig):
    n = S.shape[0]
    A = np.zeros((n, n))
    R = np.zeros((n, n))
    idx = np.arange(n)
    streak = 0
    prev: tuple[int, ...] | None = None
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        # responsibilities: r(i,k) = s(i,k) - max_{k'!=k}(a(i,k') + s(i,k'))
        AS = A + S
        first = np.argmax(AS, axis=1)
        best = AS[idx, first]
        AS[idx, first] = -np.inf
        second = AS.max(axis=1)
        Rnew = S - best[:, None]
        Rnew[idx, first] = S[idx, first] - second
        R = config.damping * R + (1.0 - config.damping) * Rnew

        # availabilities: a(i,k) = min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
        Rp = np.maximum(R, 0.0)
        np.fill_diagonal(Rp, R.diagonal())
        Anew = Rp.sum(axis=0)[None, :] - Rp
        diag = Anew.diagonal().copy()
        Anew = np.minimum(Anew, 0.0)
        np.fill_diagonal(Anew, diag)
        A = config.damping * A + (1.0 - config.damping) * Anew

        exemplars = tuple(np.flatnonzero(np.diagonal(A) + np.diagonal(R) > 0.0))
        if exemplars and exemplars == prev:
            streak += 1
            if streak >= config.convergence_window:
                return list(exemplars), iterations, True
        else:
            streak = 1 if exemplars else 0
        prev = exemplars
    return list(prev or ()), iterations, False


def cluster_ap(samples: Sequence[Sample], config: ApConfig) -> Partition:
    """Cluster by exemplar consensus; every sample joins its most
    similar exemplar, exemplars join themselves."""
    if not samples:
        raise ValueError("no samples")
    ids = [s.id for s in samples]
    X = np.array([s.features for s in samples], dtype=float)
    n = len(ids)
    meta: dict = {"iterations": 0, "converged": True}
    if n == 1:
        exemplars = [0]
    else:
        S = similarity_matrix(X, config.preference)
        exemplars, iters, converged = _message_pass(S, config)
        meta.update(iterations=iters, converged=converged)
        if not exemplars:
            # no consensus: fall back to the best-connected sample
            exemplars = [int(np.argmax(S.sum(axis=1)))]
            meta["degenerate_convergence"] = True

    exemplars = sorted(exemplars)
    if n == 1:
        labels = np.zeros(1, dtype=int)
    else:
        labels = np.argmax(S[:, exemplars], axis=1)
        for rank, e in enumerate(exemplars):
            labels[e] = rank

    assignment: dict[int, int] = {}
    rows: dict[int, list[int]] = {}
    for row, lab in enumerate(labels):
        assignment[ids[row]] = int(lab)
        rows.setdefault(int(lab), []).append(row)
    clusters = {
        cid: fit_gaussian(X[rws], cluster_id=cid,
                          members=[ids[r] for r in rws])
        for cid, rws in sorted(rows.items())
    }
    part = Partition(assignment, clusters)
    part.meta.update(meta)
    part.meta["exemplars"] = [ids[e] for e in exemplars]
    return part
