"""Hierarchical and diarization-style clustering engines.

Both engines start from an over-segmented initialization, repeatedly
merge the KL2-closest pair of Gaussian clusters, and stop at the first
merge the BIC gain rejects.  The diarization engine additionally
re-segments samples to their best cluster and retrains the Gaussians
until stable before every merge; with locking enabled it also forces all
views of one physical plant to stay in a single cluster.

The public operations work on Partition values; the engines run on a
compact array-backed state internally (same formulas, same numbers) so
that desk-scale runs stay fast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fieldclust.gaussian import (
    EPS_VAR,
    GaussianCluster,
    fit_gaussian,
    kl2_matrix,
    log_likelihood_matrix,
    log_likelihood_rows,
    merge_gain,
)

INIT_MODES = ("per-image", "per-plant-group", "fixed-count")


@dataclass(frozen=True)
class Sample:
    """One plant observation: a feature vector plus bookkeeping ids.

    Views of the same physical plant share ``plant_group``; samples seen
    only once get a unique group of their own.
    """

    id: int
    plant_group: int
    features: np.ndarray
    label: int | None = None
    pose: tuple[float, float] | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)


@dataclass
class Partition:
    """A full assignment of sample ids to clusters."""

    assignment: dict[int, int]
    clusters: dict[int, GaussianCluster]
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        for sid, cid in self.assignment.items():
            if cid not in self.clusters:
                raise AssertionError(f"sample {sid} assigned to missing cluster {cid}")
        total = 0
        for cid, cl in self.clusters.items():
            if cl.count == 0 or not cl.members:
                raise AssertionError(f"cluster {cid} is empty")
            total += cl.count
            for sid in cl.members:
                if self.assignment.get(sid) != cid:
                    raise AssertionError(
                        f"cluster {cid} member {sid} not assigned to it")
        if total != len(self.assignment):
            raise AssertionError("cluster members and assignment disagree")

    def cluster_sizes(self) -> dict[int, int]:
        return {cid: cl.count for cid, cl in sorted(self.clusters.items())}


@dataclass
class ClusterConfig:
    """Knobs shared by the hierarchical-type engines."""

    lam: float = 1.0
    max_inner_iters: int = 100
    locking: bool = False
    init_mode: str = "per-image"
    init_count: int | None = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"unknown init_mode {self.init_mode!r}")


def feature_map(samples: Sequence[Sample]) -> dict[int, np.ndarray]:
    """Sample id -> feature row, validating ids and dimensions."""
    data: dict[int, np.ndarray] = {}
    dim = None
    for s in samples:
        if s.id in data:
            raise ValueError(f"duplicate sample id {s.id}")
        if dim is None:
            dim = s.features.shape[0]
        elif s.features.shape[0] != dim:
            raise ValueError("inconsistent feature dimensions")
        data[s.id] = s.features
    return data


class _State:
    """Array-backed working state: sample rows sorted by id, clusters as
    sorted row-index arrays plus their current Gaussian parameters."""

    def __init__(self, samples: Sequence[Sample]):
        if not samples:
            raise ValueError("no samples")
        feature_map(samples)  # validates ids/dims
        ordered = sorted(samples, key=lambda s: s.id)
        self.ids = np.array([s.id for s in ordered])
        self.X = np.array([s.features for s in ordered], dtype=float)
        if not np.all(np.isfinite(self.X)):
            raise ValueError("non-finite feature values")
        self.row_of = {int(sid): r for r, sid in enumerate(self.ids)}
        groups: dict[int, list[int]] = {}
        for r, s in enumerate(ordered):
            groups.setdefault(s.plant_group, []).append(r)
        self.group_rows = [np.array(rows) for _, rows in sorted(groups.items())]
        self.group_of_row = np.empty(len(ordered), dtype=np.int64)
        for g, rows in enumerate(self.group_rows):
            self.group_of_row[rows] = g
        self.group_first_row = np.array([rows[0] for rows in self.group_rows])
        self.assignment = np.empty(len(ordered), dtype=np.int64)
        self.rows: dict[int, np.ndarray] = {}
        self.means: dict[int, np.ndarray] = {}
        self.variances: dict[int, np.ndarray] = {}
        self.dirty: set[int] = set()
        self.meta: dict = {}

    # ---- conversions -------------------------------------------------

    @classmethod
    def from_partition(cls, partition: Partition,
                       samples: Sequence[Sample]) -> "_State":
        state = cls(samples)
        for r, sid in enumerate(state.ids):
            state.assignment[r] = partition.assignment[int(sid)]
        for cid, cl in partition.clusters.items():
            state.rows[cid] = np.flatnonzero(state.assignment == cid)
            state.means[cid] = np.asarray(cl.mean, dtype=float)
            state.variances[cid] = np.asarray(cl.variance, dtype=float)
        state.dirty = set(state.rows)
        state.meta = dict(partition.meta)
        return state

    def to_partition(self) -> Partition:
        assignment = {int(sid): int(cid)
                      for sid, cid in zip(self.ids, self.assignment)}
        clusters = {}
        for cid in sorted(self.rows):
            members = frozenset(int(s) for s in self.ids[self.rows[cid]])
            clusters[cid] = GaussianCluster(
                id=cid, mean=self.means[cid].copy(),
                variance=self.variances[cid].copy(),
                count=len(members), members=members)
        return Partition(assignment, clusters, dict(self.meta))

    # ---- primitive steps ---------------------------------------------

    def ordered_cids(self) -> list[int]:
        return sorted(self.rows)

    def loglik_matrix(self, cids: list[int]) -> np.ndarray:
        means = np.array([self.means[c] for c in cids])
        variances = np.array([self.variances[c] for c in cids])
        return log_likelihood_matrix(means, variances, self.X)

    def refit(self, cid: int) -> None:
        block = self.X[self.rows[cid]]
        self.means[cid] = block.mean(axis=0)
        self.variances[cid] = np.maximum(block.var(axis=0), EPS_VAR)

    def rebuild_rows(self) -> None:
        # drop emptied clusters, re-derive row sets from the assignment,
        # and mark clusters whose membership changed for refitting
        order = np.argsort(self.assignment, kind="stable")
        vals = self.assignment[order]
        cuts = np.flatnonzero(vals[1:] != vals[:-1]) + 1
        new_rows = {int(self.assignment[g[0]]): g
                    for g in np.split(order, cuts)}
        for gone in set(self.rows) - set(new_rows):
            del self.rows[gone], self.means[gone], self.variances[gone]
            self.dirty.discard(gone)
        for cid, rows in new_rows.items():
            old = self.rows.get(cid)
            if old is None or old.shape != rows.shape or not np.array_equal(old, rows):
                self.dirty.add(cid)
        self.rows = new_rows

    def segment(self, loglik: np.ndarray, cids: list[int]) -> None:
        # argmax picks the first (lowest) cluster id on ties
        best = np.argmax(loglik, axis=1)
        self.assignment = np.array(cids, dtype=np.int64)[best]
        self.rebuild_rows()

    def enforce_locks(self, loglik: np.ndarray, cids: list[int]) -> None:
        firsts = self.assignment[self.group_first_row]
        mismatch = self.assignment != firsts[self.group_of_row]
        if not mismatch.any():
            return
        col_of = {cid: k for k, cid in enumerate(cids)}
        for g in np.unique(self.group_of_row[mismatch]):
            rows = self.group_rows[g]
            candidates = [int(c) for c in np.unique(self.assignment[rows])]
            totals = np.array([
                float(np.sum(loglik[rows, col_of[c]])) for c in candidates])
            winner = candidates[int(np.argmax(totals))]
            self.assignment[rows] = winner
        self.rebuild_rows()

    def retrain(self) -> None:
        # refitting is idempotent, so clusters with unchanged members
        # can keep their parameters
        for cid in sorted(self.dirty):
            self.refit(cid)
        self.dirty.clear()

    def stabilize(self, config: ClusterConfig) -> None:
        iters = 0
        for _ in range(config.max_inner_iters):
            iters += 1
            previous = self.assignment
            cids = self.ordered_cids()
            loglik = self.loglik_matrix(cids)
            self.segment(loglik, cids)
            if config.locking:
                self.enforce_locks(loglik, cids)
            self.retrain()
            if np.array_equal(previous, self.assignment):
                break
        self.meta["inner_iterations"] = self.meta.get("inner_iterations", 0) + iters

    def closest_pair(self) -> tuple[int, int]:
        cids = self.ordered_cids()
        means = np.array([self.means[c] for c in cids])
        variances = np.array([self.variances[c] for c in cids])
        dist = kl2_matrix(means, variances)
        np.fill_diagonal(dist, np.inf)
        flat = int(np.argmin(dist))  # row-major first min -> lowest id pair
        i, j = divmod(flat, dist.shape[0])
        a, b = cids[i], cids[j]
        return (a, b) if a < b else (b, a)

    def merge_gain(self, a: int, b: int, lam: float) -> float:
        """Same quantity as :func:`fieldclust.gaussian.merge_gain`."""
        rows_a, rows_b = self.rows[a], self.rows[b]
        rows_m = np.sort(np.concatenate([rows_a, rows_b]))
        block = self.X[rows_m]
        mean_m = block.mean(axis=0)
        var_m = np.maximum(block.var(axis=0), EPS_VAR)
        ll = 0.0
        for rows, mean, var in ((rows_a, self.means[a], self.variances[a]),
                                (rows_b, self.means[b], self.variances[b])):
            ll += float(np.sum(log_likelihood_rows(mean, var, self.X[rows])))
        ll -= float(np.sum(log_likelihood_rows(mean_m, var_m, block)))
        p = 2 * self.X.shape[1]
        return ll - 0.5 * lam * p * np.log(len(rows_m))

    def merge(self, a: int, b: int) -> None:
        keep, drop = (a, b) if a < b else (b, a)
        self.assignment[self.rows[drop]] = keep
        self.rows[keep] = np.sort(np.concatenate([self.rows[keep],
                                                  self.rows[drop]]))
        del self.rows[drop], self.means[drop], self.variances[drop]
        self.dirty.discard(drop)
        self.refit(keep)


def initialize(samples: Sequence[Sample], config: ClusterConfig) -> Partition:
    """Build the starting partition.

    per-image: one singleton cluster per sample.
    per-plant-group: one cluster per plant group.
    fixed-count: samples round-robined by ascending id into k clusters.
    """
    state = _init_state(samples, config)
    return state.to_partition()


def _init_state(samples: Sequence[Sample], config: ClusterConfig) -> _State:
    state = _State(samples)
    n = len(state.ids)
    if config.init_mode == "per-image":
        state.assignment = np.arange(n, dtype=np.int64)
    elif config.init_mode == "per-plant-group":
        for cid, rows in enumerate(state.group_rows):
            state.assignment[rows] = cid
    else:
        k = config.init_count
        if k is None or k < 1:
            raise ValueError("fixed-count init requires init_count >= 1")
        if k > n:
            raise ValueError(f"init_count {k} exceeds sample count {n}")
        state.assignment = np.arange(n, dtype=np.int64) % k
    state.rebuild_rows()
    state.retrain()
    return state


def segment_clusters(partition: Partition, samples: Sequence[Sample]) -> Partition:
    """Reassign every sample to its maximum-likelihood cluster.

    Ties break toward the lowest cluster id; clusters left empty are
    deleted.  Gaussian parameters are left untouched (retraining is a
    separate step).
    """
    state = _State.from_partition(partition, samples)
    cids = state.ordered_cids()
    state.segment(state.loglik_matrix(cids), cids)
    return state.to_partition()


def retrain_clusters(partition: Partition, samples: Sequence[Sample]) -> Partition:
    """Refit every cluster's Gaussian on its current members."""
    state = _State.from_partition(partition, samples)
    state.retrain()
    return state.to_partition()


def enforce_locks(partition: Partition, samples: Sequence[Sample]) -> Partition:
    """Pull every split plant group into one cluster.

    For each group spanning several clusters, each candidate cluster
    (one currently holding any of the group's samples) is scored by the
    summed log density of all the group's samples under it; the whole
    group moves to the argmax, ties toward the lowest cluster id.
    """
    state = _State.from_partition(partition, samples)
    cids = state.ordered_cids()
    state.enforce_locks(state.loglik_matrix(cids), cids)
    return state.to_partition()


def stabilize(partition: Partition, samples: Sequence[Sample],
              config: ClusterConfig) -> Partition:
    """Iterate segment (+ lock enforcement) and retrain until no
    assignment changes, capped at ``max_inner_iters``."""
    state = _State.from_partition(partition, samples)
    state.stabilize(config)
    return state.to_partition()


def cluster_hierarchical(samples: Sequence[Sample],
                         config: ClusterConfig) -> Partition:
    """Agglomerative clustering: merge the KL2-closest pair while the
    BIC gain approves; the first rejection ends the run.  No
    re-segmentation between merges."""
    state = _init_state(samples, config)
    accepted = rejected = 0
    while len(state.rows) > 1:
        a, b = state.closest_pair()
        if state.merge_gain(a, b, config.lam) < 0:
            state.merge(a, b)
            accepted += 1
        else:
            rejected += 1
            break
    state.meta.update(merges_accepted=accepted, merges_rejected=rejected,
                      outer_iterations=accepted + rejected)
    return state.to_partition()


def cluster_diarization(samples: Sequence[Sample],
                        config: ClusterConfig) -> Partition:
    """Merge loop interleaved with stabilization: re-segment and retrain
    to a fixpoint before each merge decision.  With ``config.locking``
    plant groups are kept whole inside every stabilization pass."""
    state = _init_state(samples, config)
    accepted = rejected = 0
    while True:
        state.stabilize(config)
        if len(state.rows) <= 1:
            break
        a, b = state.closest_pair()
        if state.merge_gain(a, b, config.lam) < 0:
            state.merge(a, b)
            accepted += 1
        else:
            rejected += 1
            break
    state.meta.update(merges_accepted=accepted, merges_rejected=rejected,
                      outer_iterations=accepted + rejected)
    return state.to_partition()


def split_plant_groups(partition: Partition,
                       samples: Sequence[Sample]) -> list[int]:
    """Plant groups whose samples span more than one cluster."""
    seen: dict[int, set[int]] = {}
    by_id = {s.id: s for s in samples}
    for sid, cid in partition.assignment.items():
        seen.setdefault(by_id[sid].plant_group, set()).add(cid)
    return sorted(g for g, cids in seen.items() if len(cids) > 1)
