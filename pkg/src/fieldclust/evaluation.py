"""Clustering quality metrics against ground-truth class labels.

The headline metric (DScore) rewards few, pure clusters: every cluster
is assigned to its dominant class, each class is scored by the
purity-weighted share of its samples captured by its clusters divided by
how many clusters it was split into, and the final score averages the
per-class scores so rare classes count as much as common ones.
Conventional pairwise precision/recall/accuracy/F1 are reported
alongside.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from fieldclust.clustering import Partition
from fieldclust.gaussian import GaussianCluster


class PairwiseMetrics(NamedTuple):
    precision: float
    recall: float
    accuracy: float
    f1: float


@dataclass(frozen=True)
class LabeledPartition:
    """A partition together with a class label for every assigned sample."""

    partition: Partition
    labels: Mapping[int, int]

    def __post_init__(self):
        missing = [sid for sid in self.partition.assignment if sid not in self.labels]
        if missing:
            raise ValueError(f"samples without labels: {sorted(missing)[:10]}")
        if not self.partition.assignment:
            raise ValueError("empty partition")


@dataclass(frozen=True)
class DScoreReport:
    dscore: float
    per_class_scores: dict[int, float]
    cluster_to_class: dict[int, int]
    pairwise: PairwiseMetrics
    n_clusters: int


def purity(cluster: GaussianCluster, cls: int,
           labels: Mapping[int, int]) -> float:
    """Fraction of the cluster's samples that belong to class ``cls``."""
    if not cluster.members:
        raise ValueError("empty cluster")
    hits = sum(1 for sid in cluster.members if labels[sid] == cls)
    return hits / cluster.count


def assign_clusters_to_classes(labeled: LabeledPartition) -> dict[int, int]:
    """Map every cluster to its dominant class; ties go to the lowest
    class id."""
    out: dict[int, int] = {}
    for cid, cl in sorted(labeled.partition.clusters.items()):
        counts = Counter(labeled.labels[sid] for sid in cl.members)
        out[cid] = min(counts, key=lambda c: (-counts[c], c))
    return out


def class_score(cls: int, labeled: LabeledPartition,
                assignment: Mapping[int, int]) -> float:
    """Purity-weighted coverage of a class divided by the number of
    clusters assigned to it.  Classes that win no cluster score 0."""
    n_c = sum(1 for sid in labeled.partition.assignment
              if labeled.labels[sid] == cls)
    if n_c == 0:
        raise ValueError(f"class absent from labels: {cls}")
    owned = [cid for cid, c in assignment.items() if c == cls]
    if not owned:
        return 0.0
    total = 0.0
    for cid in owned:
        cl = labeled.partition.clusters[cid]
        n_kc = sum(1 for sid in cl.members if labeled.labels[sid] == cls)
        total += (n_kc / cl.count) * (n_kc / n_c)
    return total / len(owned)


def pairwise_metrics(labeled: LabeledPartition) -> PairwiseMetrics:
    """Pairwise precision/recall/accuracy/F1 over all sample pairs.

    Computed from contingency counts; agrees exactly with enumerating
    the O(n^2) pairs.  Degenerate denominators yield 0.
    """
    assignment = labeled.partition.assignment
    n = len(assignment)
    if n < 2:
        raise ValueError("need at least 2 samples for pairwise metrics")

    def pairs2(m: int) -> int:
        return m * (m - 1) // 2

    cluster_sizes = Counter(assignment.values())
    class_sizes = Counter(labeled.labels[sid] for sid in assignment)
    cells = Counter((cid, labeled.labels[sid]) for sid, cid in assignment.items())

    same_cluster = sum(pairs2(m) for m in cluster_sizes.values())
    same_class = sum(pairs2(m) for m in class_sizes.values())
    tp = sum(pairs2(m) for m in cells.values())
    fp = same_cluster - tp
    fn = same_class - tp
    total = pairs2(n)
    tn = total - tp - fp - fn

    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    accuracy = (tp + tn) / total
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return PairwiseMetrics(precision, recall, accuracy, f1)


def labeled_from_assignment(assignment: Mapping[int, int],
                            labels: Mapping[int, int]) -> LabeledPartition:
    """Build a LabeledPartition from a bare sample->cluster map (for
    evaluating assignment files; the placeholder Gaussians carry only
    membership)."""
    members: dict[int, set[int]] = {}
    for sid, cid in assignment.items():
        members.setdefault(cid, set()).add(sid)
    clusters = {
        cid: GaussianCluster(id=cid, mean=np.zeros(1), variance=np.ones(1),
                             count=len(ids), members=frozenset(ids))
        for cid, ids in members.items()
    }
    return LabeledPartition(Partition(dict(assignment), clusters), labels)


def dscore(labeled: LabeledPartition) -> DScoreReport:
    """Full evaluation: per-class scores, their mean, the cluster-class
    map, and pairwise metrics."""
    assignment = assign_clusters_to_classes(labeled)
    classes = sorted({labeled.labels[sid] for sid in labeled.partition.assignment})
    per_class = {c: class_score(c, labeled, assignment) for c in classes}
    score = sum(per_class.values()) / len(per_class)
    return DScoreReport(
        dscore=score,
        per_class_scores=per_class,
        cluster_to_class=assignment,
        pairwise=pairwise_metrics(labeled),
        n_clusters=len(labeled.partition.clusters),
    )
