"""Boxes, class labels and detections shared by every part of the line."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

DEFAULT_CLASS_NAMES: tuple[str, ...] = (
    "easy_open_ok",
    "easy_open_fault",
    "contour_ok",
    "contour_fault",
    "label_ok",
    "label_fault",
)

# Slack allowed on normalized coordinates before a box is rejected.
NORM_TOL = 1e-6


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, origin at the top-left corner."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinate: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True, slots=True)
class NormalizedBox:
    """YOLO-style box: center and size as fractions of the image dimensions."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        problem = normalized_box_problem(self.cx, self.cy, self.w, self.h)
        if problem:
            raise ValueError(problem)


def normalized_box_problem(cx: float, cy: float, w: float, h: float) -> str | None:
    """Return a description of the first violated normalization bound, or None."""
    for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
        if not math.isfinite(v):
            return f"{name} is not finite"
        if v < -NORM_TOL or v > 1 + NORM_TOL:
            return f"{name} out of range: {v}"
    if cx - w / 2 < -NORM_TOL or cx + w / 2 > 1 + NORM_TOL:
        return f"box exceeds image horizontally: cx={cx}, w={w}"
    if cy - h / 2 < -NORM_TOL or cy + h / 2 > 1 + NORM_TOL:
        return f"box exceeds image vertically: cy={cy}, h={h}"
    return None


@dataclass(frozen=True, slots=True)
class ClassLabel:
    id: int
    name: str


@dataclass(frozen=True, slots=True)
class Detection:
    box: BoundingBox
    label: ClassLabel
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")


@dataclass(frozen=True, slots=True)
class TruthBox:
    """A ground-truth object expressed in pixels, ready for matching."""

    box: BoundingBox
    label: ClassLabel


def class_labels(names: Sequence[str] = DEFAULT_CLASS_NAMES) -> dict[str, ClassLabel]:
    """Map each class name to its positional label."""
    return {name: ClassLabel(i, name) for i, name in enumerate(names)}


def label_for(name: str, names: Sequence[str] = DEFAULT_CLASS_NAMES) -> ClassLabel:
    return ClassLabel(list(names).index(name), name)


def _clamp(v: float, lo: float, hi: float) -> float:
    return min(max(v, lo), hi)


def to_corner_form(n: NormalizedBox, img_w: float, img_h: float) -> BoundingBox:
    if img_w <= 0 or img_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {img_w}x{img_h}")
    return BoundingBox(
        _clamp((n.cx - n.w / 2) * img_w, 0.0, img_w),
        _clamp((n.cy - n.h / 2) * img_h, 0.0, img_h),
        _clamp((n.cx + n.w / 2) * img_w, 0.0, img_w),
        _clamp((n.cy + n.h / 2) * img_h, 0.0, img_h),
    )


def to_normalized(b: BoundingBox, img_w: float, img_h: float) -> NormalizedBox:
    """Inverse of :func:`to_corner_form` for boxes inside the image."""
    if img_w <= 0 or img_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {img_w}x{img_h}")
    cx, cy = b.center
    return NormalizedBox(cx / img_w, cy / img_h, b.width / img_w, b.height / img_h)


def clip_box(b: BoundingBox, img_w: float, img_h: float) -> BoundingBox:
    return BoundingBox(
        _clamp(b.x_min, 0.0, img_w),
        _clamp(b.y_min, 0.0, img_h),
        _clamp(b.x_max, 0.0, img_w),
        _clamp(b.y_max, 0.0, img_h),
    )


def area(b: BoundingBox) -> float:
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)
