"""Report figures rendered with matplotlib (Agg, file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from fieldclust.clustering import Partition  # noqa: E402
from fieldclust.evaluation import DScoreReport  # noqa: E402
from fieldclust.fieldmap import FieldMap  # noqa: E402


def save_cluster_sizes(partition: Partition, path: str | Path) -> None:
    sizes = partition.cluster_sizes()
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar([str(c) for c in sizes], list(sizes.values()), color="#4c8a4c")
    ax.set_xlabel("cluster id")
    ax.set_ylabel("samples")
    ax.set_title(f"cluster sizes (K={len(sizes)})")
    if len(sizes) > 24:
        ax.tick_params(axis="x", labelsize=5, rotation=90)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_class_scores(report: DScoreReport, path: str | Path) -> None:
    classes = sorted(report.per_class_scores)
    scores = [report.per_class_scores[c] for c in classes]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar([str(c) for c in classes], scores, color="#6a7fc0")
    ax.axhline(report.dscore, color="#c04a4a", linestyle="--",
               label=f"DScore = {report.dscore:.3f}")
    ax.set_xlabel("class id")
    ax.set_ylabel("class score")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_field_scatter(fmap: FieldMap, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for cid in sorted(fmap.palette):
        pts = [e.pose for e in fmap.entries if e.cluster_id == cid]
        if not pts:
            continue
        ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=18,
                   color=fmap.palette[cid], label=str(cid))
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    ax.set_title("field map by cluster")
    if len(fmap.palette) <= 12:
        ax.legend(title="cluster", fontsize=7, loc="center left",
                  bbox_to_anchor=(1.0, 0.5))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
