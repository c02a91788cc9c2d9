"""Box algebra, IoU and the crop/rescale views used by scale enhancement."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

# Products like 0.3 * 1280 land a few ulps off the integer they denote.
_SNAP_EPS = 1e-9


class Category(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"

    @classmethod
    def parse(cls, name: str) -> "Category":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(
                f"unknown category {name!r}; expected one of "
                + ", ".join(c.value for c in cls)
            ) from None


CATEGORIES: tuple[Category, ...] = tuple(Category)


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box in pixels, origin top-left, y pointing down."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"inverted box {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.x1, self.y1, self.x2, self.y2


@dataclass(frozen=True, slots=True)
class FrameMeta:
    frame_id: str
    camera_id: str
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame dims must be positive, got {self.width}x{self.height}")

    @property
    def key(self) -> tuple[str, str]:
        return self.frame_id, self.camera_id


@dataclass(frozen=True, slots=True)
class Detection:
    box: BBox
    category: Category
    score: float
    frame_id: str
    camera_id: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def key(self) -> tuple[str, str]:
        return self.frame_id, self.camera_id


@dataclass(frozen=True, slots=True)
class ViewTransform:
    """Maps original-frame coordinates onto a cropped, rescaled detector input.

    ``out_width``/``out_height`` may exceed ``scale * crop`` dims; the excess is
    padding at the right/bottom and never holds image content.
    """

    crop: BBox
    scale: float
    out_width: int
    out_height: int

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.out_width < _ceil(self.scale * self.crop.width):
            raise ValueError("out_width smaller than the scaled crop")
        if self.out_height < _ceil(self.scale * self.crop.height):
            raise ValueError("out_height smaller than the scaled crop")

    @property
    def content_width(self) -> float:
        return self.scale * self.crop.width

    @property
    def content_height(self) -> float:
        return self.scale * self.crop.height

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.crop.x1 == 0.0 and self.crop.y1 == 0.0

    @classmethod
    def identity(cls, frame: FrameMeta) -> "ViewTransform":
        return cls(BBox(0.0, 0.0, float(frame.width), float(frame.height)), 1.0,
                   frame.width, frame.height)


def _floor(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP_EPS else math.floor(v)


def _ceil(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP_EPS else math.ceil(v)


def area(box: BBox) -> float:
    return (box.x2 - box.x1) * (box.y2 - box.y1)


def intersection(a: BBox, b: BBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union is empty."""
    inter = intersection(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def make_enhancement_view(
    frame: FrameMeta,
    x_lo_frac: float = 0.0,
    y_lo_frac: float = 0.3,
    x_hi_frac: float = 1.0,
    y_hi_frac: float = 0.8,
    scale: float = 1.5,
    stride: int = 64,
) -> ViewTransform:
    """Build the crop-and-enlarge view for a frame.

    Crop bounds are rounded outward to whole pixels and the output size is
    ``scale * crop`` rounded up to a multiple of ``stride``. For a 1920x1280
    frame with the defaults this gives crop (0, 384, 1920, 1024) and a
    2880x960 detector input.
    """
    for lo, hi, axis in ((x_lo_frac, x_hi_frac, "x"), (y_lo_frac, y_hi_frac, "y")):
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"{axis} crop fractions must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")

    crop = BBox(
        float(_floor(x_lo_frac * frame.width)),
        float(_floor(y_lo_frac * frame.height)),
        float(_ceil(x_hi_frac * frame.width)),
        float(_ceil(y_hi_frac * frame.height)),
    )
    out_w = _ceil(_ceil(scale * crop.width) / stride) * stride
    out_h = _ceil(_ceil(scale * crop.height) / stride) * stride
    return ViewTransform(crop, float(scale), out_w, out_h)


def apply_transform(box: BBox, view: ViewTransform) -> BBox:
    s, cx, cy = view.scale, view.crop.x1, view.crop.y1
    return BBox((box.x1 - cx) * s, (box.y1 - cy) * s, (box.x2 - cx) * s, (box.y2 - cy) * s)


def invert_transform(box: BBox, view: ViewTransform) -> BBox:
    s, cx, cy = view.scale, view.crop.x1, view.crop.y1
    return BBox(box.x1 / s + cx, box.y1 / s + cy, box.x2 / s + cx, box.y2 / s + cy)


def clip_box(box: BBox, width: float, height: float) -> BBox:
    x1 = min(max(box.x1, 0.0), width)
    y1 = min(max(box.y1, 0.0), height)
    x2 = min(max(box.x2, 0.0), width)
    y2 = min(max(box.y2, 0.0), height)
    return BBox(x1, y1, x2, y2)


def clip_to_frame(box: BBox, frame: FrameMeta) -> BBox:
    return clip_box(box, float(frame.width), float(frame.height))
