"""Axis-aligned boxes with continuous pixel coordinates."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateBoxError


@dataclass(frozen=True)
class BBox:
    """Box (x0, y0, x1, y1): top-left and bottom-right corners.

    Coordinates are continuous; a valid box has x0 < x1 and y0 < y1.
    Degenerate values are representable so error paths can inspect them;
    operations that need a valid box call :meth:`require_valid`.
    """

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    def is_valid(self) -> bool:
        return self.x0 < self.x1 and self.y0 < self.y1

    def require_valid(self) -> None:
        if not self.is_valid():
            raise DegenerateBoxError(f"box has no area: {self.as_list()}")

    def contains_box(self, other: "BBox") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and self.x1 >= other.x1
            and self.y1 >= other.y1
        )

    def intersect(self, other: "BBox") -> "BBox":
        return BBox(
            max(self.x0, other.x0),
            max(self.y0, other.y0),
            min(self.x1, other.x1),
            min(self.y1, other.y1),
        )

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def as_list(self) -> list[float]:
        return [float(self.x0), float(self.y0), float(self.x1), float(self.y1)]

    @classmethod
    def from_list(cls, values) -> "BBox":
        if len(values) != 4:
            raise ValueError(f"box needs 4 coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))
