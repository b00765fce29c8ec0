"""Seeded synthetic dataset and field-image generation.

Produces labelled multi-view plant datasets (each plant emits several
jittered views sharing a plant group) for the clustering and evaluation
tests, and rendered field images (green blobs on a noisy brown
background with exact masks) for the segmentation tests.  Everything is
driven by the single seed in the spec.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fieldclust.clustering import Sample

BACKGROUND_RGB = (118.0, 96.0, 62.0)   # dry-soil brown
PLANT_RGB = (72.0, 138.0, 58.0)        # leaf green


@dataclass(frozen=True)
class ClassSpec:
    mean: tuple[float, ...]
    stddev: float
    n_plants: int


@dataclass
class SynthSpec:
    classes: list[ClassSpec]
    views_per_plant: int | tuple[int, int] = 1
    view_jitter: float = 0.0
    seed: int = 0
    pose_extent: tuple[float, float] = (20.0, 10.0)
    # field-image rendering
    image_size: tuple[int, int] = (320, 240)   # (width, height)
    n_images: int = 2
    noise_sigma: float = 8.0
    blob_radius: tuple[float, float] = (10.0, 22.0)

    def __post_init__(self):
        if not self.classes:
            raise ValueError("need at least one class")
        dims = {len(c.mean) for c in self.classes}
        if len(dims) != 1:
            raise ValueError("class means must share one dimension")
        if any(c.n_plants < 1 for c in self.classes):
            raise ValueError("n_plants must be >= 1")
        if self.view_jitter < 0:
            raise ValueError("view_jitter must be >= 0")

    @property
    def dim(self) -> int:
        return len(self.classes[0].mean)


def _views_count(spec: SynthSpec, rng: np.random.Generator) -> int:
    v = spec.views_per_plant
    if isinstance(v, tuple):
        lo, hi = v
        return int(rng.integers(lo, hi + 1))
    return int(v)


def _row_layout(n: int, extent: tuple[float, float]) -> list[tuple[float, float]]:
    # planter rows: fill row by row across the field
    per_row = max(1, math.ceil(math.sqrt(n)))
    n_rows = math.ceil(n / per_row)
    w, h = extent
    out = []
    for k in range(n):
        row, col = divmod(k, per_row)
        out.append(((col + 0.5) * w / per_row, (row + 0.5) * h / n_rows))
    return out


def generate(spec: SynthSpec) -> tuple[list[Sample], dict[int, int]]:
    """Draw plants per class, emit jittered views per plant, and return
    the samples plus the ground-truth label map."""
    rng = np.random.default_rng(spec.seed)
    total_plants = sum(c.n_plants for c in spec.classes)
    poses = _row_layout(total_plants, spec.pose_extent)
    samples: list[Sample] = []
    labels: dict[int, int] = {}
    sid = 0
    plant = 0
    for ci, cls in enumerate(spec.classes):
        mean = np.asarray(cls.mean, dtype=float)
        for _ in range(cls.n_plants):
            center = mean + rng.normal(0.0, cls.stddev, size=spec.dim)
            n_views = _views_count(spec, rng)
            px, py = poses[plant]
            for v in range(n_views):
                feats = center + rng.normal(0.0, spec.view_jitter, size=spec.dim) \
                    if spec.view_jitter > 0 else center.copy()
                samples.append(Sample(
                    id=sid, plant_group=plant, features=feats, label=ci,
                    pose=(px + 0.05 * v, py)))
                labels[sid] = ci
                sid += 1
            plant += 1
    return samples, labels


def _render_field(rng: np.random.Generator, spec: SynthSpec
                  ) -> tuple[np.ndarray, np.ndarray]:
    w, h = spec.image_size
    total = sum(c.n_plants for c in spec.classes)
    image = np.empty((h, w, 3), dtype=float)
    for ch, base in enumerate(BACKGROUND_RGB):
        image[:, :, ch] = base + rng.normal(0.0, spec.noise_sigma, size=(h, w))
    mask = np.zeros((h, w), dtype=bool)
    if total > 0:
        per_row = max(1, math.ceil(math.sqrt(total)))
        n_rows = math.ceil(total / per_row)
        cell_w = w / per_row
        cell_h = h / n_rows
        yy, xx = np.mgrid[0:h, 0:w]
        for k in range(total):
            row, col = divmod(k, per_row)
            cx = (col + 0.5) * cell_w + rng.uniform(-0.08, 0.08) * cell_w
            cy = (row + 0.5) * cell_h + rng.uniform(-0.08, 0.08) * cell_h
            lo, hi = spec.blob_radius
            cap = 0.38 * min(cell_w, cell_h)   # keep blobs apart
            rx = min(rng.uniform(lo, hi), cap)
            ry = rx * rng.uniform(0.6, 1.0)
            if rng.random() < 0.5:
                rx, ry = ry, rx
            blob = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
            mask |= blob
            for ch, base in enumerate(PLANT_RGB):
                noise = rng.normal(0.0, spec.noise_sigma, size=int(blob.sum()))
                image[:, :, ch][blob] = base + noise
    image = np.clip(np.round(image), 0, 255).astype(np.uint8)
    return image, (mask.astype(np.uint8) * 255)


def generate_field_images(spec: SynthSpec
                          ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Render ``spec.n_images`` field images with exact plant masks."""
    rng = np.random.default_rng(spec.seed)
    images, masks = [], []
    for _ in range(spec.n_images):
        img, msk = _render_field(rng, spec)
        images.append(img)
        masks.append(msk)
    return images, masks


def three_blob_spec(seed: int = 0, *, plants_per_class: int = 10,
                    views: int = 5, jitter: float = 0.5,
                    separation: float = 30.0) -> SynthSpec:
    """Three well-separated 2-D classes (given stddev 1, the separation
    is in class-sigma units), multi-view plants."""
    means = [
        (0.0, separation),
        (-separation * math.sin(math.pi / 3), -separation / 2),
        (separation * math.sin(math.pi / 3), -separation / 2),
    ]
    return SynthSpec(
        classes=[ClassSpec(m, 1.0, plants_per_class) for m in means],
        views_per_plant=views, view_jitter=jitter, seed=seed)


def table_field_spec(seed: int = 0, *, overlap_angle_deg: float = 4.0,
                     radius: float = 30.0) -> SynthSpec:
    """Four classes shaped like the field survey: plant counts
    (33, 27, 49, 3), ~3.4 views per plant, and the two grass-like
    classes placed close enough to overlap."""
    def polar(deg):
        rad = math.radians(deg)
        return (radius * math.cos(rad), radius * math.sin(rad))

    classes = [
        ClassSpec(polar(0.0), 1.0, 33),                # grass A
        ClassSpec(polar(overlap_angle_deg), 1.0, 27),  # grass B, overlapping A
        ClassSpec(polar(120.0), 1.0, 49),              # broad-leaf, distinct
        ClassSpec(polar(240.0), 1.0, 3),               # rare class
    ]
    return SynthSpec(classes=classes, views_per_plant=(2, 5),
                     view_jitter=0.5, seed=seed)
