"""Row/column bags and the multiple-instance-learning dice loss.

Every row and column of the crop is a bag of pixels. A bag is positive when
it passes through the ground-truth box, negative otherwise; the expansion
margin supplies the negative bags. The loss is a squared-dice score over
per-bag maxima:

    loss = 1 - 2 * sum_i(g_i * max(B_i)^2) / (sum_i max(B_i)^2 + sum_i g_i^2)

with binary bag labels g_i. The gradient flows only to each bag's argmax
pixel (subgradient of max; lowest flat index wins ties).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NoNegativeBagsError
from .imaging import ProbMask
from .roi import CropGeometry


@dataclass(frozen=True)
class Bag:
    """One row or column of pixels, as flat indices, plus its label."""

    pixel_indices: np.ndarray
    label: int
    axis: str  # "row" or "col"
    ordinate: int


@dataclass(frozen=True)
class BagSet:
    bags: tuple[Bag, ...]
    mask_w: int
    mask_h: int

    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.bags], dtype=np.float64)

    def box_region(self) -> np.ndarray:
        """Boolean H x W grid of pixels whose row and column bags are both positive.

        This is exactly the pixels covered by the ground-truth box.
        """
        rows = np.zeros(self.mask_h, dtype=bool)
        cols = np.zeros(self.mask_w, dtype=bool)
        for bag in self.bags:
            if bag.label == 1:
                if bag.axis == "row":
                    rows[bag.ordinate] = True
                else:
                    cols[bag.ordinate] = True
        return rows[:, None] & cols[None, :]


def _interval_hits(start: float, stop: float, n: int) -> np.ndarray:
    """Which unit cells [k, k+1) intersect the half-open interval [start, stop)."""
    k = np.arange(n, dtype=np.float64)
    return (k < stop) & (k + 1.0 > start)


def bags_for_box(gt_box, width: int, height: int, include_margins: bool = True) -> BagSet:
    """Build the row/column bags for a box inside a width x height crop.

    ``include_margins=False`` drops the negative bags entirely; it exists to
    demonstrate the degenerate fill-the-box behavior and skips the
    negative-bag check.
    """
    gt_box.require_valid()
    row_pos = _interval_hits(gt_box.y0, gt_box.y1, height)
    col_pos = _interval_hits(gt_box.x0, gt_box.x1, width)
    bags: list[Bag] = []
    base = np.arange(width * height, dtype=np.intp).reshape(height, width)
    for r in range(height):
        label = int(row_pos[r])
        if label == 0 and not include_margins:
            continue
        bags.append(Bag(base[r, :].copy(), label, "row", r))
    for c in range(width):
        label = int(col_pos[c])
        if label == 0 and not include_margins:
            continue
        bags.append(Bag(base[:, c].copy(), label, "col", c))
    if not any(b.label == 1 for b in bags):
        raise NoNegativeBagsError("ground-truth box misses every row and column")
    if include_margins and all(b.label == 1 for b in bags):
        raise NoNegativeBagsError(
            "ground-truth box spans the full crop in both axes; expansion margin "
            "too small or clipped away"
        )
    return BagSet(tuple(bags), width, height)


def build_bags(geom: CropGeometry, include_margins: bool = True) -> BagSet:
    """Bags for a crop geometry, labeled against its ground-truth box."""
    return bags_for_box(geom.gt_box_in_crop, geom.crop_w, geom.crop_h, include_margins)


def mil_loss(m: ProbMask, bags: BagSet) -> tuple[float, np.ndarray]:
    """Loss and gradient of the squared-dice MIL objective.

    Returns ``(loss, grad)`` with ``grad`` shaped like the mask. At most one
    pixel per bag receives gradient; a pixel that is the argmax of both its
    row and its column accumulates both contributions.
    """
    if (m.height, m.width) != (bags.mask_h, bags.mask_w):
        raise DimensionMismatchError(
            f"mask is {m.height}x{m.width}, bags expect {bags.mask_h}x{bags.mask_w}"
        )
    flat = m.data.ravel()
    n_bags = len(bags.bags)
    p = np.empty(n_bags, dtype=np.float64)
    argmax = np.empty(n_bags, dtype=np.intp)
    for i, bag in enumerate(bags.bags):
        values = flat[bag.pixel_indices]
        j = int(np.argmax(values))  # first occurrence = lowest flat index
        p[i] = values[j]
        argmax[i] = bag.pixel_indices[j]
    g = bags.labels()
    numerator = 2.0 * np.sum(g * p * p)
    denominator = np.sum(p * p) + np.sum(g)
    loss = 1.0 - numerator / denominator
    # d/dp_k of (1 - A/B): -(4 g_k p_k B - 2 p_k A) / B^2
    dp = -2.0 * p * (2.0 * g * denominator - numerator) / (denominator * denominator)
    grad_flat = np.zeros(flat.shape, dtype=np.float64)
    np.add.at(grad_flat, argmax, dp)
    return float(loss), grad_flat.reshape(m.height, m.width)
