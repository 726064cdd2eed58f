"""Region-based detection-quality metrics.

Quantifies how well a detection map separates labeled regions from the
background and from each other.  All metrics are affine-invariant in the
map values: contrast-to-noise ratio (CNR) against a pooled std, a pairwise
separability matrix between defect labels, and an IQR-normalized boundary
sharpness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

CNR_CAP = 1e6


class EmptyRegionError(ValueError):
    """A requested region or boundary has no pixels."""


@dataclass(frozen=True)
class RegionStats:
    mean: float
    std: float
    count: int


def region_stats(map_img: np.ndarray, mask: np.ndarray) -> dict[int, RegionStats]:
    """Per-label mean/std/count over the map."""
    if map_img.shape != mask.shape:
        raise ValueError(f"map shape {map_img.shape} != mask shape {mask.shape}")
    out = {}
    for label in np.unique(mask):
        vals = map_img[mask == label]
        out[int(label)] = RegionStats(mean=float(vals.mean()),
                                      std=float(vals.std()),
                                      count=int(vals.size))
    return out


def _pair_cnr(a: np.ndarray, b: np.ndarray) -> float:
    delta = abs(float(a.mean()) - float(b.mean()))
    pooled = np.sqrt((float(a.var()) + float(b.var())) / 2.0)
    if pooled * CNR_CAP <= delta:
        return CNR_CAP if delta > 0.0 else 0.0
    if delta == 0.0:
        return 0.0
    return min(delta / pooled, CNR_CAP)


def cnr(map_img: np.ndarray, mask: np.ndarray, label: int,
        background_label: int = 0) -> float:
    """Contrast-to-noise ratio of one label against the background.

    ``|mean(label) - mean(bg)| / sqrt((std(label)^2 + std(bg)^2) / 2)``,
    capped at 1e6 so zero-variance fixtures stay finite and sortable.
    """
    if map_img.shape != mask.shape:
        raise ValueError(f"map shape {map_img.shape} != mask shape {mask.shape}")
    fg = map_img[mask == label]
    bg = map_img[mask == background_label]
    if fg.size == 0:
        raise EmptyRegionError(f"label {label} has no pixels")
    if bg.size == 0:
        raise EmptyRegionError(f"background label {background_label} has no pixels")
    return _pair_cnr(fg, bg)


def separability(map_img: np.ndarray, mask: np.ndarray,
                 labels=None, background_label: int = 0
                 ) -> tuple[np.ndarray, list[int]]:
    """Pairwise CNR matrix between defect labels.

    Returns ``(matrix, labels)``: symmetric, zero diagonal.  ``labels``
    defaults to every non-background label present in the mask.
    """
    if labels is None:
        labels = [int(v) for v in np.unique(mask) if v != background_label]
    labels = list(labels)
    if len(labels) < 2:
        raise ValueError(f"need >= 2 labels, got {labels}")
    groups = []
    for label in labels:
        vals = map_img[mask == label]
        if vals.size == 0:
            raise EmptyRegionError(f"label {label} has no pixels")
        groups.append(vals)
    n = len(labels)
    matrix = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            value = _pair_cnr(groups[i], groups[j])
            matrix[i, j] = matrix[j, i] = value
    return matrix, labels


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Pixels on a label boundary, dilated by one pixel."""
    edges = np.zeros(mask.shape, dtype=bool)
    edges[:-1, :] |= mask[:-1, :] != mask[1:, :]
    edges[1:, :] |= mask[:-1, :] != mask[1:, :]
    edges[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    edges[:, 1:] |= mask[:, :-1] != mask[:, 1:]
    return binary_dilation(edges, np.ones((3, 3), dtype=bool))


def edge_sharpness(map_img: np.ndarray, mask: np.ndarray) -> float:
    """Mean gradient magnitude across label boundaries, IQR-normalized.

    Central-difference gradients averaged over the 1-pixel-dilated mask
    boundary, divided by the map's interquartile range so maps with
    different dynamic ranges compare fairly.  A constant map reports 0.
    """
    if map_img.shape != mask.shape:
        raise ValueError(f"map shape {map_img.shape} != mask shape {mask.shape}")
    band = boundary_mask(mask)
    if not band.any():
        raise EmptyRegionError("mask has no label boundaries")
    gy, gx = np.gradient(map_img.astype(np.float64))
    grad = np.hypot(gx, gy)
    iqr = float(np.percentile(map_img, 75) - np.percentile(map_img, 25))
    if iqr <= 0.0:
        return 0.0
    return float(grad[band].mean() / iqr)
