"""Colour-space Gaussian plant detection.

A full-covariance Gaussian over the 6-D pixel feature [H, S, u, v, a, b]
(HSV hue/saturation plus the chromatic coordinates of CIE Luv and Lab)
is trained on annotated plant pixels; applying it yields a per-pixel
log-likelihood map which is thresholded, cleaned by erosions/dilations,
and split into detection regions by border following, with nearby
regions merged.

All CIE conversions assume 8-bit sRGB input and the D65 white point.
Hue is kept raw in degrees, so colours near the red wraparound (h ~ 0 vs
h ~ 360) straddle the circular seam; plant greens sit far from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_D65 = (0.95047, 1.0, 1.08883)
_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_STRUCT3 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class PixelFeature:
    h: float   # hue, degrees [0, 360)
    s: float   # saturation [0, 1]
    u: float   # CIE Luv u*
    v: float   # CIE Luv v*
    a: float   # CIE Lab a*
    b: float   # CIE Lab b*


@dataclass(frozen=True)
class PixelModel:
    """Full-covariance Gaussian over pixel features plus the learnt
    log-likelihood decision threshold."""

    mean: np.ndarray
    covariance: np.ndarray
    log_threshold: float

    def __post_init__(self):
        self.mean.setflags(write=False)
        self.covariance.setflags(write=False)
        np.linalg.cholesky(self.covariance)  # must be positive definite


@dataclass(frozen=True)
class DetectionRegion:
    """One segmented plant region in image coordinates.

    ``bbox`` is (x0, y0, x1, y1) with half-open pixel ranges; ``contour``
    is the ordered outer boundary of the region's largest component as
    (row, col) pairs.
    """

    mask: np.ndarray
    bbox: tuple[int, int, int, int]
    contour: np.ndarray
    area_px: int


def pixel_features(image: np.ndarray) -> np.ndarray:
    """Vectorised (H, W, 6) feature map [h, s, u, v, a, b] of an 8-bit
    sRGB image."""
    rgb = np.asarray(image, dtype=float) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]

    # HSV hue/saturation
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta == 0, 1.0, delta)
    h = np.where(mx == r, (g - b) / safe % 6.0,
                 np.where(mx == g, (b - r) / safe + 2.0,
                          (r - g) / safe + 4.0))
    h = np.where(delta == 0, 0.0, h * 60.0) % 360.0
    s = np.where(mx == 0, 0.0, delta / np.where(mx == 0, 1.0, mx))

    # sRGB -> linear -> XYZ
    lin = np.where(rgb <= 0.04045, rgb / 12.92,
                   ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    xn, yn, zn = _D65

    # Lab
    eps = (6.0 / 29.0) ** 3

    def f(t):
        return np.where(t > eps, np.cbrt(t),
                        t / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)

    fx, fy, fz = f(x / xn), f(y / yn), f(z / zn)
    lum = 116.0 * fy - 16.0
    lab_a = 500.0 * (fx - fy)
    lab_b = 200.0 * (fy - fz)

    # Luv
    denom = x + 15.0 * y + 3.0 * z
    safe_d = np.where(denom == 0, 1.0, denom)
    up = np.where(denom == 0, 0.0, 4.0 * x / safe_d)
    vp = np.where(denom == 0, 0.0, 9.0 * y / safe_d)
    dn = xn + 15.0 * yn + 3.0 * zn
    upn, vpn = 4.0 * xn / dn, 9.0 * yn / dn
    luv_u = 13.0 * lum * (up - upn)
    luv_v = 13.0 * lum * (vp - vpn)

    return np.stack([h, s, luv_u, luv_v, lab_a, lab_b], axis=-1)


def rgb_to_pixel_feature(r: int, g: int, b: int) -> PixelFeature:
    """Feature of a single 8-bit sRGB pixel."""
    for c in (r, g, b):
        if not 0 <= c <= 255:
            raise ValueError("channel values must be in [0, 255]")
    feats = pixel_features(np.array([[[r, g, b]]], dtype=np.uint8))[0, 0]
    return PixelFeature(*[float(v) for v in feats])


def model_log_likelihood(model: PixelModel, feats: np.ndarray) -> np.ndarray:
    """Gaussian log density of each pixel feature under the model."""
    shape = feats.shape[:-1]
    flat = feats.reshape(-1, feats.shape[-1]) - model.mean
    chol = np.linalg.cholesky(model.covariance)
    solved = np.linalg.solve(chol, flat.T)
    maha = np.sum(solved ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol)))
    d = model.mean.shape[0]
    return (-0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)).reshape(shape)


def _per_pixel_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def train_pixel_model(images, masks, threshold_grid: int = 200) -> PixelModel:
    """Fit the plant-pixel Gaussian and pick the log-likelihood
    threshold maximising per-pixel F1 on the training masks.

    The grid spans the 1st..99th percentile of the plant pixels' own
    log-likelihoods.
    """
    if len(images) == 0 or len(images) != len(masks):
        raise ValueError("need matching image and mask lists")
    feats = [pixel_features(img) for img in images]
    bool_masks = [np.asarray(m) > 0 for m in masks]
    plant = np.concatenate([f[m] for f, m in zip(feats, bool_masks)], axis=0)
    if plant.shape[0] < 7:
        raise ValueError("need at least 7 annotated plant pixels")
    mean = plant.mean(axis=0)
    centered = plant - mean
    cov = centered.T @ centered / plant.shape[0]
    cov[np.diag_indices_from(cov)] += 1e-6
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("rank-deficient pixel features") from None

    probe = PixelModel(mean=mean, covariance=cov, log_threshold=0.0)
    logliks = [model_log_likelihood(probe, f) for f in feats]
    plant_ll = np.concatenate([ll[m] for ll, m in zip(logliks, bool_masks)])
    lo, hi = np.percentile(plant_ll, [1.0, 99.0])
    grid = np.linspace(lo, hi, threshold_grid)
    all_ll = np.concatenate([ll.ravel() for ll in logliks])
    all_truth = np.concatenate([m.ravel() for m in bool_masks])
    scores = [_per_pixel_f1(all_ll >= t, all_truth) for t in grid]
    best = grid[int(np.argmax(scores))]
    return PixelModel(mean=mean, covariance=cov, log_threshold=float(best))


_TRACE_OFFSETS = np.array([  # clockwise Moore neighbourhood, from east
    (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)])


_OFFSET_INDEX = {tuple(o): i for i, o in enumerate(_TRACE_OFFSETS)}


def trace_boundary(mask: np.ndarray) -> np.ndarray:
    """Ordered outer boundary of the mask's foreground (assumed one
    8-connected component) by Moore neighbour tracing.

    Returns an (L, 2) array of (row, col); a lone pixel yields length 1.
    Tracing stops when the walk re-enters the start pixel about to leave
    it the same way it first did.
    """
    padded = np.pad(np.asarray(mask, dtype=bool), 1)
    rows, cols = np.nonzero(padded)
    if rows.size == 0:
        raise ValueError("empty mask")
    start = (int(rows[0]), int(cols[0]))  # row-major first: top-left most
    offs = [tuple(int(v) for v in o) for o in _TRACE_OFFSETS]
    if not any(padded[start[0] + dr, start[1] + dc] for dr, dc in offs):
        return np.array([[start[0] - 1, start[1] - 1]])

    contour = [start]
    p = start
    b = (start[0], start[1] - 1)  # west neighbour, background by scan order
    first_exit: tuple[int, int] | None = None
    limit = 4 * int(rows.size) + 8
    for _ in range(limit):
        scan_from = _OFFSET_INDEX[(b[0] - p[0], b[1] - p[1])]
        nxt = back = None
        for k in range(1, 9):
            dr, dc = offs[(scan_from + k) % 8]
            cell = (p[0] + dr, p[1] + dc)
            if padded[cell]:
                nxt = cell
                pr, pc = offs[(scan_from + k - 1) % 8]
                back = (p[0] + pr, p[1] + pc)
                break
        if p == start:
            if first_exit is None:
                first_exit = nxt
            elif nxt == first_exit:
                break
        contour.append(nxt)
        p, b = nxt, back
    if contour[-1] == start:
        contour.pop()
    return np.array(contour) - 1


def contour_perimeter(contour: np.ndarray) -> float:
    """Closed-path length of a traced boundary: unit steps for edge
    moves, sqrt(2) for diagonal moves."""
    if contour.shape[0] < 2:
        return 0.0
    closed = np.vstack([contour, contour[:1]])
    steps = np.abs(np.diff(closed, axis=0))
    return float(np.sum(np.where(steps.sum(axis=1) == 2, np.sqrt(2.0), 1.0)))


def _bbox_of(mask: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return (int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def _bbox_gap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    dx = max(a[0] - b[2], b[0] - a[2], 0)
    dy = max(a[1] - b[3], b[1] - a[3], 0)
    return float(np.hypot(dx, dy))


def largest_component_contour(mask: np.ndarray) -> np.ndarray:
    """Boundary of the biggest 8-connected component."""
    labels, count = ndimage.label(mask, structure=_STRUCT3)
    if count == 0:
        raise ValueError("empty mask")
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, count + 1))
    biggest = int(np.argmax(sizes)) + 1
    return trace_boundary(labels == biggest)


def region_from_mask(mask: np.ndarray) -> DetectionRegion:
    """Wrap a ready-made binary mask (e.g. a cropped plant annotation)
    as a detection region."""
    mask = np.asarray(mask) > 0
    if not mask.any():
        raise ValueError("empty mask")
    return DetectionRegion(mask=mask, bbox=_bbox_of(mask),
                           contour=largest_component_contour(mask),
                           area_px=int(mask.sum()))


def segment(image: np.ndarray, model: PixelModel,
            morph: tuple[int, int] = (2, 2), min_area: int = 400,
            merge_dist: float = 20.0) -> list[DetectionRegion]:
    """Threshold the log-likelihood map, clean it up, and extract
    detection regions, merging regions whose boxes nearly touch."""
    n_erode, n_dilate = morph
    fg = model_log_likelihood(model, pixel_features(image)) >= model.log_threshold
    if n_erode > 0:
        fg = ndimage.binary_erosion(fg, structure=_STRUCT3, iterations=n_erode)
    if n_dilate > 0:
        fg = ndimage.binary_dilation(fg, structure=_STRUCT3, iterations=n_dilate)
    labels, count = ndimage.label(fg, structure=_STRUCT3)
    masks = []
    for k in range(1, count + 1):
        m = labels == k
        if int(m.sum()) >= min_area:
            masks.append(m)

    # merge components whose bounding boxes come within merge_dist
    boxes = [_bbox_of(m) for m in masks]
    parent = list(range(len(masks)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if _bbox_gap(boxes[i], boxes[j]) <= merge_dist:
                parent[find(j)] = find(i)

    grouped: dict[int, np.ndarray] = {}
    for i, m in enumerate(masks):
        root = find(i)
        grouped[root] = grouped[root] | m if root in grouped else m

    regions = []
    for m in grouped.values():
        regions.append(DetectionRegion(
            mask=m, bbox=_bbox_of(m),
            contour=largest_component_contour(m),
            area_px=int(m.sum())))
    regions.sort(key=lambda r: (r.bbox[1], r.bbox[0], r.bbox[3], r.bbox[2]))
    return regions
