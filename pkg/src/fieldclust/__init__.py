"""Unsupervised clustering toolkit for field plant observations.

Groups plant observations into visually similar clusters without prior
species knowledge.  Provides Gaussian cluster modelling with a symmetric
KL divergence and a BIC merge test, hierarchical and diarization-style
clustering engines with optional plant-group locking, a Dirichlet process
Gaussian mixture sampler, affinity propagation, the DScore evaluation
metric, a colour-space pixel segmenter with hand-crafted shape features,
a synthetic-field generator, and a batch CLI that writes assignment
files, reports, field maps, and figures.
"""

from fieldclust.gaussian import (
    EPS_VAR,
    GaussianCluster,
    fit_gaussian,
    kl2_distance,
    log_likelihood,
    merge_gain,
)
from fieldclust.clustering import (
    ClusterConfig,
    Partition,
    Sample,
    cluster_diarization,
    cluster_hierarchical,
    enforce_locks,
    initialize,
    retrain_clusters,
    segment_clusters,
    stabilize,
)
from fieldclust.dpgmm import DpgmmConfig, cluster_dpgmm
from fieldclust.affinity import ApConfig, cluster_ap
from fieldclust.evaluation import (
    DScoreReport,
    LabeledPartition,
    PairwiseMetrics,
    assign_clusters_to_classes,
    class_score,
    dscore,
    pairwise_metrics,
    purity,
)

__version__ = "0.1.0"
