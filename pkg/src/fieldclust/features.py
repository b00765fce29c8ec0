"""Hand-crafted shape and reflectance features, plus feature-set
assembly (per-block L2 normalization and concatenation).

The 14 hand-crafted values are six shape descriptors of the region mask
(perimeter, area, skeleton length, compactness, convexity,
skeleton/perimeter) followed by eight order statistics and moments of
the excess-green index over the region's pixels.  The scale-robust
variant drops perimeter, area and skeleton length, which all change
with image scale.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np
from skimage.morphology import convex_hull_image, skeletonize

from fieldclust.segmentation import (
    DetectionRegion,
    contour_perimeter,
    largest_component_contour,
)

SCALE_SENSITIVE = ("perimeter", "area", "skeleton_length")


@dataclass(frozen=True)
class HcfVector:
    perimeter: float
    area: float
    skeleton_length: float
    compactness: float
    convexity: float
    skeleton_per_perimeter: float
    exg_min: float
    exg_max: float
    exg_range: float
    exg_mean: float
    exg_median: float
    exg_stddev: float
    exg_kurtosis: float
    exg_skewness: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])

    @staticmethod
    def names() -> list[str]:
        return [f.name for f in fields(HcfVector)]


@dataclass(frozen=True)
class FeatureSetSpec:
    """Which feature blocks to assemble.

    kind 'hcf' / 'hcf-scale-robust' expect 14-dim hand-crafted vectors in
    ``vectors``; 'external' takes opaque vectors as-is; 'concat' joins
    the already-normalized parts.
    """

    kind: str
    vectors: Mapping[int, np.ndarray] | None = None
    parts: tuple["FeatureSetSpec", ...] = ()

    def __post_init__(self):
        if self.kind not in ("hcf", "hcf-scale-robust", "external", "concat"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == "concat":
            if len(self.parts) < 2:
                raise ValueError("concat needs at least 2 parts")
        elif self.vectors is None:
            raise ValueError(f"kind {self.kind!r} needs vectors")


def excess_green(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Excess-green index 2g - r - b on chromaticity-normalized RGB,
    linearly rescaled to [0, 255] over the mask (zero raster outside).

    A constant-colour mask has no range and rescales to all zeros.
    """
    mask = np.asarray(mask) > 0
    if not mask.any():
        raise ValueError("empty mask")
    rgb = np.asarray(image, dtype=float)
    total = rgb.sum(axis=-1)
    safe = np.where(total == 0, 1.0, total)
    r = rgb[..., 0] / safe
    g = rgb[..., 1] / safe
    b = rgb[..., 2] / safe
    exg = np.where(total == 0, 0.0, 2.0 * g - r - b)
    out = np.zeros(mask.shape, dtype=float)
    vals = exg[mask]
    span = vals.max() - vals.min()
    if span > 0:
        out[mask] = (vals - vals.min()) / span * 255.0
    return out


def _moment_stats(vals: np.ndarray) -> tuple[float, ...]:
    # min, max, range, mean, median, population stddev, excess kurtosis,
    # skewness; zero-variance regions get skewness = kurtosis = 0
    mn, mx = float(vals.min()), float(vals.max())
    mean = float(vals.mean())
    median = float(np.median(vals))
    var = float(np.mean((vals - mean) ** 2))
    std = float(np.sqrt(var))
    if var > 0:
        z = (vals - mean) / std
        skew = float(np.mean(z ** 3))
        kurt = float(np.mean(z ** 4) - 3.0)
    else:
        skew = kurt = 0.0
    return mn, mx, mx - mn, mean, median, std, kurt, skew


def extract_hcf(region: DetectionRegion, image: np.ndarray) -> HcfVector:
    """Shape descriptors of the region mask plus excess-green
    statistics of its pixels."""
    mask = np.asarray(region.mask) > 0
    area = int(mask.sum())
    if area < 4:
        raise ValueError("degenerate region")
    contour = largest_component_contour(mask)
    perimeter = contour_perimeter(contour)
    if perimeter == 0:
        perimeter = 1.0  # sub-pixel contour; keep ratios finite
    skeleton_length = int(np.count_nonzero(skeletonize(mask)))
    hull_area = int(np.count_nonzero(convex_hull_image(mask)))
    exg = excess_green(image, mask)
    mn, mx, rng, mean, median, std, kurt, skew = _moment_stats(exg[mask])
    return HcfVector(
        perimeter=float(perimeter),
        area=float(area),
        skeleton_length=float(skeleton_length),
        compactness=4.0 * np.pi * area / perimeter ** 2,
        convexity=area / hull_area,
        skeleton_per_perimeter=skeleton_length / perimeter,
        exg_min=mn, exg_max=mx, exg_range=rng, exg_mean=mean,
        exg_median=median, exg_stddev=std, exg_kurtosis=kurt,
        exg_skewness=skew)


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    """Unit-norm copy; the zero vector stays zero."""
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec.copy()


def _block(sample_ids: Sequence[int], spec: FeatureSetSpec) -> dict[int, np.ndarray]:
    missing = [sid for sid in sample_ids if sid not in spec.vectors]
    if missing:
        raise ValueError(f"missing feature vectors for samples: {missing}")
    out = {}
    for sid in sample_ids:
        vec = np.asarray(spec.vectors[sid], dtype=float)
        if spec.kind == "hcf-scale-robust":
            keep = [i for i, name in enumerate(HcfVector.names())
                    if name not in SCALE_SENSITIVE]
            vec = vec[keep]
        out[sid] = l2_normalize(vec)
    return out


def build_feature_matrix(sample_ids: Sequence[int],
                         spec: FeatureSetSpec) -> dict[int, np.ndarray]:
    """Assemble the per-sample feature vectors for a feature-set spec.

    Every block is L2-normalized per sample before concatenation and the
    concatenated result is left un-renormalized.
    """
    if spec.kind != "concat":
        return _block(sample_ids, spec)
    blocks = [build_feature_matrix(sample_ids, part) for part in spec.parts]
    return {sid: np.concatenate([blk[sid] for blk in blocks])
            for sid in sample_ids}
