"""Randomized box expansion and crop geometry.

A ground-truth box is enlarged by a random margin on each side so the crop
contains background rows and columns, then cropped and resized to the model
input size. The geometry records the affine map so masks predicted in crop
coordinates can be pasted back into image coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .boxes import BBox
from .errors import BoundsError
from .imaging import Image, ProbMask, crop, resize_bilinear, rounded_rect


@dataclass(frozen=True)
class ExpansionParams:
    """Maximum expansion rate per axis and the seed that drives the draws."""

    theta: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")


@dataclass(frozen=True)
class ExpandedBBox:
    """An expanded box together with the draws that produced it.

    The per-axis budget splits exactly: beta_x + beta_x_prime == theta_x and
    beta_y + beta_y_prime == theta_y, with each theta_* drawn from [0, theta].
    ``box`` always contains ``source``.
    """

    box: BBox
    source: BBox
    beta_x: float
    beta_x_prime: float
    beta_y: float
    beta_y_prime: float
    theta_x: float
    theta_y: float


@dataclass(frozen=True)
class CropGeometry:
    """Everything needed to map between crop coordinates and image coordinates."""

    expanded: ExpandedBBox
    crop_rect: tuple[int, int, int, int]  # integer (x0, y0, x1, y1) actually cropped
    crop_w: int
    crop_h: int
    gt_box_in_crop: BBox

    @property
    def scale_x(self) -> float:
        x0, _, x1, _ = self.crop_rect
        return self.crop_w / (x1 - x0)

    @property
    def scale_y(self) -> float:
        _, y0, _, y1 = self.crop_rect
        return self.crop_h / (y1 - y0)

    def to_json(self) -> dict[str, Any]:
        return {
            "crop_rect": list(self.crop_rect),
            "crop_size": [self.crop_w, self.crop_h],
            "gt_box_in_crop": self.gt_box_in_crop.as_list(),
            "source_box": self.expanded.source.as_list(),
            "expanded_box": self.expanded.box.as_list(),
            "betas": [
                self.expanded.beta_x,
                self.expanded.beta_x_prime,
                self.expanded.beta_y,
                self.expanded.beta_y_prime,
            ],
            "thetas": [self.expanded.theta_x, self.expanded.theta_y],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "CropGeometry":
        bx, bxp, by, byp = (float(v) for v in obj["betas"])
        tx, ty = (float(v) for v in obj["thetas"])
        expanded = ExpandedBBox(
            box=BBox.from_list(obj["expanded_box"]),
            source=BBox.from_list(obj["source_box"]),
            beta_x=bx,
            beta_x_prime=bxp,
            beta_y=by,
            beta_y_prime=byp,
            theta_x=tx,
            theta_y=ty,
        )
        w, h = obj["crop_size"]
        return cls(
            expanded=expanded,
            crop_rect=tuple(int(v) for v in obj["crop_rect"]),
            crop_w=int(w),
            crop_h=int(h),
            gt_box_in_crop=BBox.from_list(obj["gt_box_in_crop"]),
        )


def expand_with_draws(
    b: BBox, theta_x: float, theta_y: float, beta_x: float, beta_y: float
) -> ExpandedBBox:
    """Apply fixed expansion draws to a box.

    Each side moves outward by its beta times the box extent on that axis,
    so theta_x is exactly the relative width increase (same for y). The
    remainders beta_x_prime = theta_x - beta_x and beta_y_prime = theta_y -
    beta_y go to the opposite sides. The stored theta_* are re-derived as
    beta + beta_prime so the budget identity is exact in floating point.
    """
    b.require_valid()
    beta_x_prime = theta_x - beta_x
    beta_y_prime = theta_y - beta_y
    w = b.x1 - b.x0
    h = b.y1 - b.y0
    box = BBox(
        b.x0 - beta_x * w,
        b.y0 - beta_y * h,
        b.x1 + beta_x_prime * w,
        b.y1 + beta_y_prime * h,
    )
    return ExpandedBBox(
        box=box,
        source=b,
        beta_x=beta_x,
        beta_x_prime=beta_x_prime,
        beta_y=beta_y,
        beta_y_prime=beta_y_prime,
        theta_x=beta_x + beta_x_prime,
        theta_y=beta_y + beta_y_prime,
    )


def expand_box(b: BBox, params: ExpansionParams, rng: np.random.Generator) -> ExpandedBBox:
    """Randomly expand ``b``.

    Draw order is fixed (theta_x, theta_y, beta_x, beta_y, all uniform) so a
    seeded generator reproduces the same expansion sequence. The result is
    not clipped; callers clip against their image bounds.
    """
    theta_x = rng.uniform(0.0, params.theta)
    theta_y = rng.uniform(0.0, params.theta)
    beta_x = rng.uniform(0.0, theta_x)
    beta_y = rng.uniform(0.0, theta_y)
    return expand_with_draws(b, theta_x, theta_y, beta_x, beta_y)


def make_crop_geometry(
    b: BBox,
    img: Image,
    params: ExpansionParams,
    crop_w: int,
    crop_h: int,
    rng: np.random.Generator,
) -> tuple[Image, CropGeometry]:
    """Expand ``b``, crop ``img`` to the clipped expansion, and resize.

    Returns the resized crop and the geometry; ``gt_box_in_crop`` is ``b``
    pushed through the same crop-then-resize affine transform.
    """
    b.require_valid()
    if not img.bounds().contains_box(b):
        raise BoundsError(f"box {b.as_list()} outside image {img.width}x{img.height}")
    expanded = expand_box(b, params, rng)
    clipped = expanded.box.intersect(img.bounds())
    rect = rounded_rect(clipped, img.width, img.height)
    ix0, iy0, ix1, iy1 = rect
    trimmed = crop(img, BBox(float(ix0), float(iy0), float(ix1), float(iy1)))
    resized = resize_bilinear(trimmed, crop_w, crop_h)
    sx = crop_w / (ix1 - ix0)
    sy = crop_h / (iy1 - iy0)
    gt = BBox((b.x0 - ix0) * sx, (b.y0 - iy0) * sy, (b.x1 - ix0) * sx, (b.y1 - iy0) * sy)
    geom = CropGeometry(
        expanded=expanded, crop_rect=rect, crop_w=crop_w, crop_h=crop_h, gt_box_in_crop=gt
    )
    return resized, geom


def mask_to_image_space(mask: ProbMask, geom: CropGeometry, width: int, height: int) -> ProbMask:
    """Paste a crop-space score map back into full image coordinates.

    Image pixels inside the crop rectangle sample the crop-space map
    bilinearly at the inverse of the crop-then-resize transform; pixels
    outside get score 0.
    """
    if (mask.height, mask.width) != (geom.crop_h, geom.crop_w):
        raise ValueError(
            f"mask is {mask.height}x{mask.width}, geometry expects {geom.crop_h}x{geom.crop_w}"
        )
    ix0, iy0, ix1, iy1 = geom.crop_rect
    out = np.zeros((height, width), dtype=np.float64)
    src = mask.data
    xs = (np.arange(ix0, ix1) + 0.5 - ix0) * geom.scale_x - 0.5
    ys = (np.arange(iy0, iy1) + 0.5 - iy0) * geom.scale_y - 0.5
    xs = np.clip(xs, 0.0, geom.crop_w - 1.0)
    ys = np.clip(ys, 0.0, geom.crop_h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, geom.crop_w - 1)
    y1 = np.minimum(y0 + 1, geom.crop_h - 1)
    fx = (xs - x0)[None, :]
    fy = (ys - y0)[:, None]
    a = src[y0][:, x0]
    b = src[y0][:, x1]
    c = src[y1][:, x0]
    d = src[y1][:, x1]
    top = a + fx * (b - a)
    bottom = c + fx * (d - c)
    out[iy0:iy1, ix0:ix1] = top + fy * (bottom - top)
    return ProbMask(out)
