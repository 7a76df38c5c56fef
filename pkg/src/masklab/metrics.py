"""Mask-quality metrics, the retention rate, and the clustering score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NormalizationError
from .imaging import BinaryMask


@dataclass(frozen=True)
class FeatureField:
    """Per-token feature vectors on an H x W grid (data shape H x W x dim)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"feature field must be HxWxD, got shape {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ClusterAssignment:
    """Binary foreground/background assignment per token."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.dtype != np.bool_:
            raise ValueError("assignment must be a 2-D boolean grid")


def assignment_from_mask(mask: BinaryMask, token_h: int, token_w: int) -> ClusterAssignment:
    """Downsample a pixel mask to a token grid by majority vote per cell.

    A token is foreground when strictly more than half of its pixels are.
    """
    if token_h < 1 or token_w < 1:
        raise ValueError("token grid must be at least 1x1")
    h, w = mask.height, mask.width
    ys = (np.arange(h) * token_h) // h
    xs = (np.arange(w) * token_w) // w
    fg = np.zeros((token_h, token_w), dtype=np.int64)
    total = np.zeros((token_h, token_w), dtype=np.int64)
    np.add.at(fg, (ys[:, None], xs[None, :]), mask.data.astype(np.int64))
    np.add.at(total, (ys[:, None], xs[None, :]), 1)
    return ClusterAssignment((2 * fg > total))


def clustering_score(feats: FeatureField, assign: ClusterAssignment) -> float:
    """Mean squared distance from unit tokens to their unit cluster center.

    Cluster centers are the plain means of the raw foreground/background
    vectors; both tokens and centers are unit-normalized before measuring.
    Lower is better separated. The value lies in [0, 4].
    """
    if (feats.height, feats.width) != assign.data.shape:
        raise DimensionMismatchError(
            f"features are {feats.height}x{feats.width}, assignment is {assign.data.shape}"
        )
    vectors = feats.data.reshape(-1, feats.dim).astype(np.float64)
    labels = assign.data.ravel()
    if not labels.any() or labels.all():
        raise ValueError("assignment needs at least one foreground and one background token")
    norms = np.linalg.norm(vectors, axis=1)
    if (norms == 0.0).any():
        raise NormalizationError("feature field contains a zero-norm vector")
    centers = {}
    for value in (True, False):
        center = vectors[labels == value].mean(axis=0)
        scale = np.linalg.norm(center)
        if scale == 0.0:
            raise NormalizationError("cluster center has zero norm")
        centers[value] = center / scale
    unit = vectors / norms[:, None]
    target = np.where(labels[:, None], centers[True][None, :], centers[False][None, :])
    diff = unit - target
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _counts(a: BinaryMask, b: BinaryMask) -> tuple[int, int, int]:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(
            f"mask shapes differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    inter = int(np.sum(a.data & b.data))
    return inter, a.count(), b.count()


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    inter, na, nb = _counts(a, b)
    union = na + nb - inter
    if union == 0:
        return 1.0
    return inter / union


def mask_dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap 2|a&b| / (|a| + |b|); 1.0 when both masks are empty."""
    inter, na, nb = _counts(a, b)
    if na + nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def retention(box_sup_ap: float, full_sup_ap: float) -> float:
    """Box-supervised AP over fully-supervised AP, as a percentage."""
    if full_sup_ap <= 0:
        raise ValueError(f"fully-supervised AP must be > 0, got {full_sup_ap}")
    return 100.0 * box_sup_ap / full_sup_ap
