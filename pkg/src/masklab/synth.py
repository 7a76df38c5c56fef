"""Seeded synthetic scenes with exact ground-truth masks and tight boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .boxes import BBox
from .errors import DegenerateShapeError
from .imaging import BinaryMask, Image
from .rng import stream

SHAPES = ("rect", "ellipse", "lshape")


@dataclass(frozen=True)
class SceneSpec:
    width: int = 96
    height: int = 96
    shape: str = "rect"
    fg_color: tuple[float, float, float] = (0.85, 0.1, 0.1)
    bg_color: tuple[float, float, float] = (0.1, 0.75, 0.2)
    noise_sigma: float = 0.05
    distractor_count: int = 0
    seed: int = 0
    shape_box: Optional[BBox] = None  # pin the shape's bounding region; random when None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.width < 8 or self.height < 8:
            raise ValueError("scene must be at least 8x8")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        dist = math.dist(self.fg_color, self.bg_color)
        if dist <= 4.0 * self.noise_sigma:
            raise ValueError(
                f"fg/bg color distance {dist:.3f} must exceed 4*sigma = {4 * self.noise_sigma:.3f}"
            )


def _render_shape(shape: str, rect: tuple[int, int, int, int], h: int, w: int,
                  rng: np.random.Generator) -> np.ndarray:
    x0, y0, x1, y1 = rect
    mask = np.zeros((h, w), dtype=bool)
    if shape == "rect":
        mask[y0:y1, x0:x1] = True
    elif shape == "ellipse":
        cy, cx = (y0 + y1) / 2.0, (x0 + x1) / 2.0
        ry, rx = (y1 - y0) / 2.0, (x1 - x0) / 2.0
        yy = (np.arange(h) + 0.5 - cy) / ry
        xx = (np.arange(w) + 0.5 - cx) / rx
        mask = (yy[:, None] ** 2 + xx[None, :] ** 2) <= 1.0
    else:  # lshape: rectangle minus one corner quadrant
        mask[y0:y1, x0:x1] = True
        notch_w = int(round((x1 - x0) * rng.uniform(0.4, 0.6)))
        notch_h = int(round((y1 - y0) * rng.uniform(0.4, 0.6)))
        corner = int(rng.integers(0, 4))
        if corner == 0:
            mask[y0:y0 + notch_h, x0:x0 + notch_w] = False
        elif corner == 1:
            mask[y0:y0 + notch_h, x1 - notch_w:x1] = False
        elif corner == 2:
            mask[y1 - notch_h:y1, x0:x0 + notch_w] = False
        else:
            mask[y1 - notch_h:y1, x1 - notch_w:x1] = False
    return mask


def _tight_box(mask: np.ndarray) -> BBox:
    ys, xs = np.nonzero(mask)
    return BBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def generate(spec: SceneSpec) -> tuple[Image, BinaryMask, BBox]:
    """Render the scene; returns (image, ground-truth mask, tight box).

    The box is the exact bounding box of the mask. Distractor shapes never
    overlap the box, so row/column bag labels derived from it stay exact.
    Output is deterministic per seed.
    """
    rng = stream(spec.seed)
    h, w = spec.height, spec.width
    if spec.shape_box is not None:
        rect = (
            int(round(spec.shape_box.x0)),
            int(round(spec.shape_box.y0)),
            int(round(spec.shape_box.x1)),
            int(round(spec.shape_box.y1)),
        )
    else:
        bw = int(rng.integers(int(w * 0.4), int(w * 0.6) + 1))
        bh = int(rng.integers(int(h * 0.4), int(h * 0.6) + 1))
        margin_x = max(2, int(w * 0.14))
        margin_y = max(2, int(h * 0.14))
        x0 = int(rng.integers(margin_x, max(margin_x + 1, w - margin_x - bw + 1)))
        y0 = int(rng.integers(margin_y, max(margin_y + 1, h - margin_y - bh + 1)))
        rect = (x0, y0, min(x0 + bw, w - margin_x), min(y0 + bh, h - margin_y))
    mask = _render_shape(spec.shape, rect, h, w, rng)
    if not mask.any():
        raise DegenerateShapeError(f"shape {spec.shape} with box {rect} rendered no pixels")
    box = _tight_box(mask)

    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = np.asarray(spec.bg_color)
    img[mask] = np.asarray(spec.fg_color)

    for _ in range(spec.distractor_count):
        color = rng.uniform(0.0, 1.0, size=3)
        for _attempt in range(100):
            dw = int(rng.integers(4, max(5, w // 6)))
            dh = int(rng.integers(4, max(5, h // 6)))
            dx0 = int(rng.integers(0, w - dw + 1))
            dy0 = int(rng.integers(0, h - dh + 1))
            cand = BBox(float(dx0), float(dy0), float(dx0 + dw), float(dy0 + dh))
            overlap = cand.intersect(box)
            if overlap.x0 < overlap.x1 and overlap.y0 < overlap.y1:
                continue
            if int(rng.integers(0, 2)) == 0:
                img[dy0:dy0 + dh, dx0:dx0 + dw] = color
            else:
                cy, cx = dy0 + dh / 2.0, dx0 + dw / 2.0
                yy = (np.arange(h) + 0.5 - cy) / (dh / 2.0)
                xx = (np.arange(w) + 0.5 - cx) / (dw / 2.0)
                blob = (yy[:, None] ** 2 + xx[None, :] ** 2) <= 1.0
                img[blob] = color
            break

    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return Image(img), BinaryMask(mask), box
