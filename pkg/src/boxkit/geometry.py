"""Axis-aligned box primitives: corner/center conversion, IoU, offset coding.

All boxes handled here live in normalized image coordinates. A
:class:`BoundingBox` is clamped to the unit square on construction, so
downstream code never sees out-of-range coordinates. Pixel-space boxes
(annotation/detection files) are converted at the I/O boundary.

Everything in this module is a pure function over immutable values and is
safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Corners = tuple[float, float, float, float]


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized corner form.

    Construction requires ``xmin <= xmax`` and ``ymin <= ymax``; the
    coordinates are then clamped to [0, 1]. Degenerate (zero-area) boxes
    are allowed and yield IoU 0 against everything.
    """

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        coords = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"misordered box corners: {coords}")
        object.__setattr__(self, "xmin", _clamp01(float(self.xmin)))
        object.__setattr__(self, "ymin", _clamp01(float(self.ymin)))
        object.__setattr__(self, "xmax", _clamp01(float(self.xmax)))
        object.__setattr__(self, "ymax", _clamp01(float(self.ymax)))

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> Corners:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True)
class BoxOffsets:
    """Dimensionless box adjustments relative to a reference (default) box.

    ``dcx``/``dcy`` shift the center in units of the reference width/height;
    ``dw``/``dh`` are log-scale factors of width/height.
    """

    dcx: float
    dcy: float
    dw: float
    dh: float

    def __post_init__(self) -> None:
        values = (self.dcx, self.dcy, self.dw, self.dh)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"offsets must be finite, got {values}")

    def as_tuple(self) -> Corners:
        return (self.dcx, self.dcy, self.dw, self.dh)


def corner_to_center(box: BoundingBox) -> tuple[float, float, float, float]:
    """Return ``(cx, cy, w, h)`` for a corner-form box."""
    return (
        (box.xmin + box.xmax) / 2.0,
        (box.ymin + box.ymax) / 2.0,
        box.xmax - box.xmin,
        box.ymax - box.ymin,
    )


def center_to_corner(cx: float, cy: float, w: float, h: float) -> BoundingBox:
    """Build a corner-form box from center form, clamping to [0, 1].

    Raises ValueError for negative width or height.
    """
    if w < 0 or h < 0:
        raise ValueError(f"negative box size: w={w}, h={h}")
    return BoundingBox(
        _clamp01(cx - w / 2.0),
        _clamp01(cy - h / 2.0),
        _clamp01(cx + w / 2.0),
        _clamp01(cy + h / 2.0),
    )


def corner_iou(a: Corners, b: Corners) -> float:
    """IoU of two ``(xmin, ymin, xmax, ymax)`` tuples in a shared frame.

    Works on any coordinate scale (normalized or pixels). Returns 0.0 when
    either box has zero area, so degenerate boxes never poison matching.
    """
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def jaccard(a: BoundingBox, b: BoundingBox) -> float:
    """Jaccard overlap |a∩b| / |a∪b| of two boxes, in [0, 1]."""
    return corner_iou(a.corners(), b.corners())


def encode_offsets(gt: BoundingBox, anchor: BoundingBox) -> BoxOffsets:
    """Express ``gt`` as offsets from ``anchor``.

    Both boxes must have strictly positive width and height. The encoding
    is the usual center-shift / log-size form:

        dcx = (g_cx - d_cx) / d_w      dw = ln(g_w / d_w)
        dcy = (g_cy - d_cy) / d_h      dh = ln(g_h / d_h)
    """
    gcx, gcy, gw, gh = corner_to_center(gt)
    dcx_, dcy_, dw_, dh_ = corner_to_center(anchor)
    if dw_ <= 0 or dh_ <= 0:
        raise ValueError(f"anchor has zero area: {anchor.corners()}")
    if gw <= 0 or gh <= 0:
        raise ValueError(f"ground-truth box has zero area: {gt.corners()}")
    return BoxOffsets(
        (gcx - dcx_) / dw_,
        (gcy - dcy_) / dh_,
        math.log(gw / dw_),
        math.log(gh / dh_),
    )


def decode_offsets(offsets: BoxOffsets, anchor: BoundingBox) -> BoundingBox:
    """Invert :func:`encode_offsets`, clamping the result to [0, 1]."""
    acx, acy, aw, ah = corner_to_center(anchor)
    if aw <= 0 or ah <= 0:
        raise ValueError(f"anchor has zero area: {anchor.corners()}")
    cx = acx + offsets.dcx * aw
    cy = acy + offsets.dcy * ah
    try:
        w = aw * math.exp(offsets.dw)
        h = ah * math.exp(offsets.dh)
    except OverflowError:
        raise ValueError(f"offsets too large to decode: {offsets.as_tuple()}") from None
    return center_to_corner(cx, cy, w, h)
