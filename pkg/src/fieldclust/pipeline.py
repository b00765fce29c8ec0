"""Batch orchestration: ingest files, run an algorithm, write artifacts.

A run reads one or more feature files (each file becomes one
L2-normalized block; several files concatenate), clusters with the
chosen algorithm, evaluates against labels when available, and writes
the assignment file, the report, the SVG field map when poses are
available, and report figures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from fieldclust import plots
from fieldclust.affinity import ApConfig, cluster_ap
from fieldclust.clustering import (
    ClusterConfig,
    Partition,
    Sample,
    cluster_diarization,
    cluster_hierarchical,
    split_plant_groups,
)
from fieldclust.dpgmm import DpgmmConfig, cluster_dpgmm
from fieldclust.evaluation import DScoreReport, LabeledPartition, dscore
from fieldclust.features import FeatureSetSpec, build_feature_matrix
from fieldclust.fieldmap import FieldMap, build_field_map, render_map
from fieldclust.io import (
    InputError,
    read_feature_file,
    read_label_file,
    read_pose_file,
    write_assignment_file,
    write_report,
)

ALGORITHMS = ("hierarchical", "hierarchical-locked", "diarization",
              "diarization-locked", "dpgmm", "ap")

# locked variants start from plant groups instead of single images
_DEFAULT_INIT = {
    "hierarchical": "per-image",
    "hierarchical-locked": "per-plant-group",
    "diarization": "per-image",
    "diarization-locked": "per-plant-group",
}


@dataclass
class RunConfig:
    algorithm: str
    feature_files: list[Path]
    out_dir: Path
    labels_file: Path | None = None
    poses_file: Path | None = None
    seed: int = 0
    # hierarchical / diarization
    lam: float = 1.0
    max_inner_iters: int = 100
    init_mode: str | None = None       # None -> algorithm default
    init_count: int | None = None
    # dpgmm
    alpha: float = 1.0
    sweeps: int = 100
    init_clusters: int = 300
    # affinity propagation
    damping: float = 0.5
    ap_max_iters: int = 200
    convergence_window: int = 15
    preference: float | str = "median"
    # map
    map_scale: float = 40.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass
class RunResult:
    partition: Partition
    samples: list[Sample]
    report: DScoreReport | None = None
    field_map: FieldMap | None = None
    artifacts: dict[str, Path] = field(default_factory=dict)


def load_samples(config: RunConfig) -> list[Sample]:
    """Read the feature files into samples; the first file fixes row
    order, plant groups, and embedded labels."""
    if not config.feature_files:
        raise InputError("no feature files given")
    tables = [read_feature_file(p) for p in config.feature_files]
    base = tables[0]
    spec = FeatureSetSpec(kind="external", vectors=base.vectors)
    if len(tables) > 1:
        parts = tuple(FeatureSetSpec(kind="external", vectors=t.vectors)
                      for t in tables)
        spec = FeatureSetSpec(kind="concat", parts=parts)
    try:
        matrix = build_feature_matrix(base.ids, spec)
    except ValueError as exc:
        raise InputError(str(exc)) from None

    labels: dict[int, int] | None = base.labels
    if config.labels_file is not None:
        labels = read_label_file(config.labels_file)
    poses = read_pose_file(config.poses_file) if config.poses_file else {}

    samples = []
    for sid in base.ids:
        samples.append(Sample(
            id=sid,
            plant_group=base.plant_groups[sid],
            features=matrix[sid],
            label=labels.get(sid) if labels else None,
            pose=poses.get(sid)))
    return samples


def run_algorithm(samples: Sequence[Sample], config: RunConfig) -> Partition:
    algo = config.algorithm
    if algo == "dpgmm":
        return cluster_dpgmm(samples, DpgmmConfig(
            alpha=config.alpha, sweeps=config.sweeps, seed=config.seed,
            init_clusters=config.init_clusters))
    if algo == "ap":
        return cluster_ap(samples, ApConfig(
            damping=config.damping, max_iters=config.ap_max_iters,
            convergence_window=config.convergence_window,
            preference=config.preference))
    cc = ClusterConfig(
        lam=config.lam,
        max_inner_iters=config.max_inner_iters,
        locking=(algo == "diarization-locked"),
        init_mode=config.init_mode or _DEFAULT_INIT[algo],
        init_count=config.init_count)
    if algo.startswith("hierarchical"):
        return cluster_hierarchical(samples, cc)
    return cluster_diarization(samples, cc)


def _config_block(config: RunConfig) -> dict:
    block = {
        "algorithm": config.algorithm,
        "features": ";".join(str(p) for p in config.feature_files),
        "seed": config.seed,
    }
    if config.labels_file:
        block["labels"] = str(config.labels_file)
    if config.poses_file:
        block["poses"] = str(config.poses_file)
    if config.algorithm in _DEFAULT_INIT:
        block["lambda"] = config.lam
        block["init_mode"] = config.init_mode or _DEFAULT_INIT[config.algorithm]
        if config.init_count is not None:
            block["init_count"] = config.init_count
        block["max_inner_iters"] = config.max_inner_iters
    elif config.algorithm == "dpgmm":
        block["alpha"] = config.alpha
        block["sweeps"] = config.sweeps
        block["init_clusters"] = config.init_clusters
    else:
        block["damping"] = config.damping
        block["max_iters"] = config.ap_max_iters
        block["convergence_window"] = config.convergence_window
        block["preference"] = config.preference
    return block


def build_report_data(config: RunConfig, partition: Partition,
                      report: DScoreReport | None,
                      fmap: FieldMap | None) -> dict:
    data: dict = {"config": _config_block(config)}
    sizes = partition.cluster_sizes()
    data["clusters"] = {
        "count": len(sizes),
        "sizes": {str(cid): n for cid, n in sizes.items()},
    }
    if partition.meta:
        data["metadata"] = {k: partition.meta[k] for k in sorted(partition.meta)
                            if not isinstance(partition.meta[k], (list, dict))}
    if report is not None:
        data["evaluation"] = {
            "dscore": report.dscore,
            "n_clusters": report.n_clusters,
            "per_class": {str(c): report.per_class_scores[c]
                          for c in sorted(report.per_class_scores)},
            "pairwise": {
                "precision": report.pairwise.precision,
                "recall": report.pairwise.recall,
                "accuracy": report.pairwise.accuracy,
                "f1": report.pairwise.f1,
            },
        }
    if fmap is not None:
        data["map"] = {"samples": len(fmap.entries), "file": "map.svg"}
    return data


def run(config: RunConfig) -> RunResult:
    """Execute the full pipeline and write all artifacts."""
    samples = load_samples(config)
    partition = run_algorithm(samples, config)
    partition.validate()
    if config.algorithm.endswith("-locked"):
        split = split_plant_groups(partition, samples)
        if split:
            raise AssertionError(f"locked run split plant groups: {split}")

    labels = {s.id: s.label for s in samples if s.label is not None}
    report = None
    if labels:
        if set(labels) != set(partition.assignment):
            raise InputError("labels do not cover all samples")
        report = dscore(LabeledPartition(partition, labels))

    fmap = None
    if any(s.pose is not None for s in samples):
        fmap = build_field_map(partition, samples, scale=config.map_scale)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    assignment_path = out / "assignment.csv"
    write_assignment_file(assignment_path, partition.assignment)
    artifacts["assignment"] = assignment_path

    report_path = out / "report.txt"
    write_report(report_path, build_report_data(config, partition, report, fmap))
    artifacts["report"] = report_path

    if fmap is not None:
        map_path = out / "map.svg"
        map_path.write_text(render_map(fmap))
        artifacts["map"] = map_path
        fig = out / "fig_field.png"
        plots.save_field_scatter(fmap, fig)
        artifacts["fig_field"] = fig

    fig_sizes = out / "fig_cluster_sizes.png"
    plots.save_cluster_sizes(partition, fig_sizes)
    artifacts["fig_cluster_sizes"] = fig_sizes
    if report is not None:
        fig_scores = out / "fig_class_scores.png"
        plots.save_class_scores(report, fig_scores)
        artifacts["fig_class_scores"] = fig_scores

    return RunResult(partition=partition, samples=samples, report=report,
                     field_map=fmap, artifacts=artifacts)
