"""Axis-aligned rectangle algebra and topological region sets.

All regions live on (or around) the unit canvas [0, 1]^2.  The two set
constructors, ``subregion_set`` (regions mostly contained in a reference
region) and ``fringe_set`` (regions overlapping it), drive the label
propagation rules of the constrained MIL trainer and the inclusion
scoring criterion.
"""

import math
from dataclasses import dataclass
from typing import Mapping

RegionId = int


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with strictly positive area."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"non-finite rectangle coordinate: {v!r}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(
                f"degenerate rectangle ({self.x1}, {self.y1}, {self.x2}, {self.y2}): "
                "corners must satisfy x1 < x2 and y1 < y2"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def contains_point(self, x: float, y: float) -> bool:
        """Closed containment test."""
        return self.x1 <= x <= self.x2 and self.y1 <= y <= self.y2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def intersection_area(a: Rect, b: Rect) -> float:
    """Area of the intersection of two rectangles, 0.0 when disjoint."""
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: Rect, b: Rect) -> float:
    """Intersection over union, in [0, 1]; 1.0 iff the rectangles coincide."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union


def containment_fraction(outer: Rect, inner: Rect) -> float:
    """Fraction of ``inner``'s area covered by ``outer``, in [0, 1]."""
    return intersection_area(outer, inner) / inner.area


def subregion_set(
    region: RegionId, pool: Mapping[RegionId, Rect], min_containment: float
) -> set[RegionId]:
    """Ids of pool members (other than ``region``) mostly contained in it.

    A pool member qualifies when at least ``min_containment`` of its own
    area lies inside the reference region.
    """
    _check_threshold(min_containment)
    ref = pool[region]
    return {
        rid
        for rid, rect in pool.items()
        if rid != region and containment_fraction(ref, rect) >= min_containment
    }


def fringe_set(
    region: RegionId, pool: Mapping[RegionId, Rect], min_overlap: float
) -> set[RegionId]:
    """Ids of pool members (other than ``region``) with IoU >= ``min_overlap``."""
    _check_threshold(min_overlap)
    ref = pool[region]
    return {
        rid
        for rid, rect in pool.items()
        if rid != region and iou(ref, rect) >= min_overlap
    }


def _check_threshold(value: float) -> None:
    if not (0.0 < value <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {value!r}")
