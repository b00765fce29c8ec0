"""Field map: cluster assignments overlaid on world poses, as SVG.

One filled marker per sample at its scaled pose, coloured by cluster,
plus a legend of cluster ids and sizes.  The palette is a fixed colour
cycle keyed by ascending cluster id and the output is byte-deterministic
for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from fieldclust.clustering import Partition, Sample

PALETTE_CYCLE = (
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
    "#a6761d", "#666666", "#1f78b4", "#b2df8a", "#fb9a99", "#cab2d6",
)


@dataclass
class MapEntry:
    sample_id: int
    pose: tuple[float, float]
    cluster_id: int
    label: int | None = None


@dataclass
class FieldMap:
    entries: list[MapEntry]
    palette: dict[int, str]
    scale: float = 40.0  # px per metre
    cluster_sizes: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("field map needs at least one entry")
        missing = {e.cluster_id for e in self.entries} - set(self.palette)
        if missing:
            raise ValueError(f"palette missing cluster ids: {sorted(missing)}")


def build_field_map(partition: Partition, samples: Sequence[Sample],
                    scale: float = 40.0) -> FieldMap:
    """Collect posed samples and give every cluster a palette colour."""
    cids = sorted(partition.clusters)
    palette = {cid: PALETTE_CYCLE[i % len(PALETTE_CYCLE)]
               for i, cid in enumerate(cids)}
    entries = [
        MapEntry(s.id, s.pose, partition.assignment[s.id], s.label)
        for s in sorted(samples, key=lambda s: s.id)
        if s.pose is not None and s.id in partition.assignment
    ]
    sizes = {cid: partition.clusters[cid].count for cid in cids}
    return FieldMap(entries=entries, palette=palette, scale=scale,
                    cluster_sizes=sizes)


def render_map(fmap: FieldMap) -> str:
    """SVG 1.1 document for the field map.

    Explicit colour references are palette colours only; text inherits
    the default fill.
    """
    xs = [e.pose[0] for e in fmap.entries]
    ys = [e.pose[1] for e in fmap.entries]
    margin = 1.0
    x0, y0 = min(xs) - margin, min(ys) - margin
    x1, y1 = max(xs) + margin, max(ys) + margin
    s = fmap.scale
    plot_w = (x1 - x0) * s
    plot_h = (y1 - y0) * s
    legend_w = 180.0
    width = plot_w + legend_w
    height = max(plot_h, 24.0 * (len(fmap.palette) + 1))
    radius = 0.12 * s

    def px(x):
        return f"{(x - x0) * s:.2f}"

    def py(y):
        return f"{(y1 - y) * s:.2f}"  # north up

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.2f}" height="{height:.2f}" '
        f'viewBox="0 0 {width:.2f} {height:.2f}">',
    ]
    for e in fmap.entries:
        parts.append(
            f'<circle cx="{px(e.pose[0])}" cy="{py(e.pose[1])}" '
            f'r="{radius:.2f}" fill="{fmap.palette[e.cluster_id]}">'
            f'<title>sample {e.sample_id} cluster {e.cluster_id}</title></circle>')
    lx = plot_w + 16.0
    parts.append(f'<text x="{lx:.2f}" y="16.00" font-size="13">clusters</text>')
    for i, cid in enumerate(sorted(fmap.palette)):
        ly = 24.0 * (i + 1) + 8.0
        size = fmap.cluster_sizes.get(cid, 0)
        parts.append(
            f'<rect x="{lx:.2f}" y="{ly:.2f}" width="14.00" height="14.00" '
            f'fill="{fmap.palette[cid]}"/>')
        parts.append(
            f'<text x="{lx + 20.0:.2f}" y="{ly + 12.0:.2f}" font-size="12">'
            f'{cid} (n={size})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
