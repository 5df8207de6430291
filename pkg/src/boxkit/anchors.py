"""Default-box (anchor) generation over multi-scale feature maps.

Scales are spread arithmetically between ``s_min`` and ``s_max``, one per
feature map. At every grid location each aspect ratio ``a`` yields a box
of width ``s*sqrt(a)`` and height ``s/sqrt(a)``, and the location gets one
extra box at the intermediate scale ``sqrt(s_k * s_{k+1})`` (the last
map borrows ``s_{m+1} = 1``). Ratio sets are either the classic static
five ``{1, 2, 3, 1/2, 1/3}`` or adapted to the training data via the
distribution module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .distribution import BinConfig, aspect_ratio_samples, representative_ratios
from .formats import GroundTruthRecord
from .geometry import BoundingBox, center_to_corner

STATIC_RATIOS: tuple[float, ...] = (1.0, 2.0, 3.0, 1.0 / 2.0, 1.0 / 3.0)

# |ratio - 1| tolerance for attaching the extra intermediate-scale box.
_EXACT_RATIO_ONE_TOL = 1e-9
_ADAPTIVE_RATIO_ONE_TOL = 0.05

# Scale for the extra box on the last feature map (s_{m+1}).
_SCALE_BEYOND_LAST = 1.0


@dataclass(frozen=True)
class AnchorConfig:
    """Geometry of the default-box grid.

    ``adaptive`` marks ratio sets learned from data: it widens the
    ratio-one tolerance for the extra box and guarantees one extra box per
    location even when no ratio is near 1, keeping the per-location box
    count at ``len(ratios) + 1``.
    """

    feature_map_sizes: tuple[int, ...]
    s_min: float = 0.2
    s_max: float = 0.9
    ratios: tuple[float, ...] = STATIC_RATIOS
    adaptive: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_map_sizes", tuple(int(f) for f in self.feature_map_sizes))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if len(self.feature_map_sizes) < 1:
            raise ValueError("need at least one feature map")
        if any(f < 1 for f in self.feature_map_sizes):
            raise ValueError(f"feature map sizes must be >= 1, got {self.feature_map_sizes}")
        if not (0.0 < self.s_min <= self.s_max <= 1.0):
            raise ValueError(f"need 0 < s_min <= s_max <= 1, got {self.s_min}, {self.s_max}")
        if len(self.ratios) == 0:
            raise ValueError("ratio set is empty")
        if any(not (math.isfinite(r) and r > 0) for r in self.ratios):
            raise ValueError(f"aspect ratios must be positive, got {self.ratios}")

    @property
    def num_feature_maps(self) -> int:
        return len(self.feature_map_sizes)


@dataclass(frozen=True)
class DefaultBox:
    """One generated default box with its provenance.

    Center form is kept exactly as generated (w or h may exceed 1 near
    image borders); :meth:`to_corner` clamps into the unit square.
    """

    cx: float
    cy: float
    w: float
    h: float
    feature_map: int
    row: int
    col: int
    ratio: float
    scale: float
    is_extra: bool

    def to_corner(self) -> BoundingBox:
        return center_to_corner(self.cx, self.cy, self.w, self.h)


@dataclass(frozen=True)
class DefaultBoxSet:
    """Ordered default boxes: by feature map, then row, column, ratio,
    with each location's extra intermediate-scale box last."""

    boxes: tuple[DefaultBox, ...]

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self) -> Iterator[DefaultBox]:
        return iter(self.boxes)

    def __getitem__(self, index: int) -> DefaultBox:
        return self.boxes[index]

    def corner_boxes(self) -> list[BoundingBox]:
        """All boxes in clamped corner form (the matching geometry)."""
        return [b.to_corner() for b in self.boxes]


def compute_scales(m: int, s_min: float, s_max: float) -> list[float]:
    """Arithmetic scale progression from ``s_min`` to ``s_max``.

    Endpoints are returned exactly; a single feature map degenerates to
    ``[s_min]``.
    """
    if m <= 0:
        raise ValueError(f"number of feature maps must be positive, got {m}")
    if not (0.0 < s_min <= s_max <= 1.0):
        raise ValueError(f"need 0 < s_min <= s_max <= 1, got {s_min}, {s_max}")
    if m == 1:
        return [s_min]
    scales = [s_min + (s_max - s_min) * k / (m - 1) for k in range(m)]
    scales[0] = s_min
    scales[-1] = s_max
    return scales


def _extra_box_ratio(config: AnchorConfig) -> float | None:
    """Ratio carried by the per-location extra box, or None for no extra.

    Static sets attach it to an exact ratio-1 entry. Adaptive sets always
    emit the extra box: on the ratio nearest 1 when within tolerance,
    otherwise on ratio 1 itself.
    """
    if config.adaptive:
        nearest = min(config.ratios, key=lambda r: abs(r - 1.0))
        return nearest if abs(nearest - 1.0) <= _ADAPTIVE_RATIO_ONE_TOL else 1.0
    for r in config.ratios:
        if abs(r - 1.0) <= _EXACT_RATIO_ONE_TOL:
            return r
    return None


def generate_default_boxes(config: AnchorConfig) -> DefaultBoxSet:
    """Deterministically generate the full default-box set for a config."""
    m = config.num_feature_maps
    scales = compute_scales(m, config.s_min, config.s_max)
    next_scales = scales[1:] + [_SCALE_BEYOND_LAST]
    extra_ratio = _extra_box_ratio(config)

    boxes: list[DefaultBox] = []
    for k, f in enumerate(config.feature_map_sizes):
        s_k = scales[k]
        s_extra = math.sqrt(s_k * next_scales[k])
        for i in range(f):
            cx = (i + 0.5) / f
            for j in range(f):
                cy = (j + 0.5) / f
                for r in config.ratios:
                    root = math.sqrt(r)
                    boxes.append(
                        DefaultBox(cx, cy, s_k * root, s_k / root, k, i, j, r, s_k, False)
                    )
                if extra_ratio is not None:
                    root = math.sqrt(extra_ratio)
                    boxes.append(
                        DefaultBox(
                            cx, cy, s_extra * root, s_extra / root,
                            k, i, j, extra_ratio, s_extra, True,
                        )
                    )
    return DefaultBoxSet(tuple(boxes))


def dedupe_ratios(values: Iterable[float], tolerance: float = 1e-6) -> list[float]:
    """Sort ascending and collapse values closer than ``tolerance``."""
    ordered = sorted(values)
    kept: list[float] = []
    for v in ordered:
        if not kept or v - kept[-1] > tolerance:
            kept.append(v)
    return kept


def adaptive_ratio_set(
    records: Sequence[GroundTruthRecord], config: BinConfig | None = None
) -> list[float]:
    """Aspect ratios for default boxes chosen from the dataset itself.

    The five representative points (mode, mean, median, quartiles) of the
    pooled aspect-ratio distribution, deduplicated to within 1e-6 and
    sorted ascending; between 1 and 5 values survive.
    """
    samples = aspect_ratio_samples(records)
    if not samples:
        raise ValueError("dataset has no ground-truth objects")
    reps = representative_ratios(samples, config)
    return dedupe_ratios(reps.as_tuple())
