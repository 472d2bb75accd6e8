"""Tracking-quality metrics over real-valued bounding boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidBoxError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: top-left corner (x, y), width w, height h."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"box needs positive extent, got w={self.w}, h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h


def vor(a: Box, b: Box) -> float:
    """Overlap ratio: intersection area over union area, in [0, 1]."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def cle(a: Box, b: Box) -> float:
    """Center location error: Euclidean distance between box centers."""
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def success_rate(vors) -> float:
    """Fraction of overlap ratios strictly above 0.5."""
    vals = list(vors)
    if not vals:
        raise ValueError("success rate of an empty list is undefined")
    return sum(1 for v in vals if v > 0.5) / len(vals)
