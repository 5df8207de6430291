"""Default-box/ground-truth matching and the detector loss.

Matching assigns every default box to the ground truth it overlaps most;
boxes at or above the Jaccard threshold become positives, the rest
background. Hard negative mining keeps only the hardest background boxes
at a fixed negative:positive ratio. The loss over an externally supplied
prediction matrix is cross-entropy on class confidences plus smooth-L1 on
encoded box offsets, normalized once by the number of positives.

No training happens here: predictions are inputs, and the only gradient
code is the analytic derivative used to cross-check the loss.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Sequence

import numpy as np

from .geometry import BoundingBox, corner_to_center, encode_offsets, jaccard

DEFAULT_NEG_POS_RATIO = 3.0

# Confidences are floored here before the log so degenerate predictions
# still produce finite losses.
CONFIDENCE_FLOOR = 1e-12


@dataclass(frozen=True)
class MatchConfig:
    """Matching thresholds: Jaccard cutoff and negative:positive ratio."""

    iou_threshold: float = 0.5
    force_best_match: bool = False
    neg_pos_ratio: float = DEFAULT_NEG_POS_RATIO

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"IoU threshold must be in (0, 1), got {self.iou_threshold}")
        if self.neg_pos_ratio < 1.0:
            raise ValueError(f"negative:positive ratio must be >= 1, got {self.neg_pos_ratio}")


@dataclass(frozen=True)
class PositiveMatch:
    """A default box matched to a ground truth: target class and box."""

    anchor_index: int
    class_index: int
    target: BoundingBox


@dataclass(frozen=True)
class MatchResult:
    """Partition of default-box indexes into positives and background."""

    positives: tuple[PositiveMatch, ...]
    negatives: tuple[int, ...]
    num_anchors: int
    num_classes: int

    @property
    def num_positives(self) -> int:
        return len(self.positives)

    def __post_init__(self) -> None:
        pos_idx = {p.anchor_index for p in self.positives}
        neg_idx = set(self.negatives)
        if pos_idx & neg_idx:
            raise ValueError("positive and negative index sets overlap")
        if pos_idx | neg_idx != set(range(self.num_anchors)):
            raise ValueError("positives and negatives do not cover all anchors")
        if self.num_classes < 2:
            raise ValueError("need background plus at least one object class")
        for p in self.positives:
            if not 1 <= p.class_index < self.num_classes:
                raise ValueError(
                    f"positive class {p.class_index} outside [1, {self.num_classes - 1}]"
                )


@dataclass(frozen=True)
class PredictionMatrix:
    """Per-default-box class confidences and box offsets.

    ``class_probs`` is (d, n) with class 0 = background; rows are
    probability vectors. ``locations`` is (d, 4) in encoded-offset order
    (dcx, dcy, dw, dh). Pass ``check=False`` to skip the probability-row
    validation (used when deliberately perturbing entries).
    """

    class_probs: np.ndarray
    locations: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check: bool) -> None:
        probs = np.array(self.class_probs, dtype=np.float64)
        locs = np.array(self.locations, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] < 2:
            raise ValueError(f"class_probs must be (d, n>=2), got shape {probs.shape}")
        if locs.shape != (probs.shape[0], 4):
            raise ValueError(
                f"locations must be ({probs.shape[0]}, 4), got shape {locs.shape}"
            )
        if check:
            if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
                raise ValueError("class confidences must lie in [0, 1]")
            sums = probs.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-6):
                raise ValueError("confidence rows must sum to 1 within 1e-6")
            if not np.all(np.isfinite(locs)):
                raise ValueError("localization values must be finite")
        probs.setflags(write=False)
        locs.setflags(write=False)
        object.__setattr__(self, "class_probs", probs)
        object.__setattr__(self, "locations", locs)

    @property
    def num_boxes(self) -> int:
        return self.class_probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.class_probs.shape[1]


@dataclass(frozen=True)
class LossConfig:
    """Localization weight in the combined loss."""

    alpha: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"localization weight must be >= 0, got {self.alpha}")


def _anchor_corner_boxes(anchors) -> list[BoundingBox]:
    """Anchors as clamped corner boxes, from a DefaultBoxSet or a plain
    sequence of BoundingBox. Matching and offset encoding both use this
    clipped geometry so the two stay consistent."""
    if hasattr(anchors, "corner_boxes"):
        return anchors.corner_boxes()
    return list(anchors)


def match_boxes(
    anchors,
    ground_truths: Sequence[tuple[BoundingBox, int]],
    config: MatchConfig | None = None,
    num_classes: int | None = None,
) -> MatchResult:
    """Partition default boxes into positives and background.

    Each anchor goes to its best-overlap ground truth (lowest GT index on
    ties) and is positive when that overlap reaches the threshold. With
    ``force_best_match`` every ground truth additionally claims its single
    best anchor regardless of threshold (earlier GTs win contested
    anchors; zero-area GTs cannot claim). With no ground truths at all,
    every anchor is background.

    ``num_classes`` (background included) is inferred from the labels when
    not given.
    """
    cfg = config or MatchConfig()
    boxes = _anchor_corner_boxes(anchors)
    if len(boxes) == 0:
        raise ValueError("anchor set is empty")
    for _, cls in ground_truths:
        if cls < 1:
            raise ValueError(f"ground-truth class must be >= 1 (0 is background), got {cls}")
    if num_classes is None:
        num_classes = max((cls for _, cls in ground_truths), default=1) + 1
        num_classes = max(num_classes, 2)
    for _, cls in ground_truths:
        if cls >= num_classes:
            raise ValueError(f"ground-truth class {cls} outside [1, {num_classes - 1}]")

    assignment: dict[int, int] = {}
    if ground_truths:
        overlaps = np.array(
            [[jaccard(a, gt_box) for gt_box, _ in ground_truths] for a in boxes]
        )
        best_gt = overlaps.argmax(axis=1)  # argmax keeps the lowest index on ties
        best_iou = overlaps[np.arange(len(boxes)), best_gt]
        for a in range(len(boxes)):
            if best_iou[a] >= cfg.iou_threshold:
                assignment[a] = int(best_gt[a])
        if cfg.force_best_match:
            claimed: set[int] = set()
            for j, (gt_box, _) in enumerate(ground_truths):
                if gt_box.area <= 0:
                    continue
                best_anchor = int(overlaps[:, j].argmax())
                if best_anchor not in claimed:
                    claimed.add(best_anchor)
                    assignment[best_anchor] = j

    positives = tuple(
        PositiveMatch(a, ground_truths[j][1], ground_truths[j][0])
        for a, j in sorted(assignment.items())
    )
    negatives = tuple(a for a in range(len(boxes)) if a not in assignment)
    return MatchResult(positives, negatives, len(boxes), num_classes)


def hard_negative_mine(
    match: MatchResult,
    predictions: PredictionMatrix,
    neg_pos_ratio: float = DEFAULT_NEG_POS_RATIO,
) -> list[int]:
    """Keep the hardest background boxes at the given negative:positive ratio.

    Hardness is low background confidence; the returned indexes are sorted
    hardest first and capped at ``floor(ratio * num_positives)``. No
    positives means no negatives are kept.
    """
    if predictions.num_boxes != match.num_anchors:
        raise ValueError(
            f"prediction rows ({predictions.num_boxes}) != anchors ({match.num_anchors})"
        )
    if predictions.num_classes != match.num_classes:
        raise ValueError(
            f"prediction classes ({predictions.num_classes}) != match classes ({match.num_classes})"
        )
    if match.num_positives == 0:
        return []
    keep = min(len(match.negatives), int(neg_pos_ratio * match.num_positives))
    background = predictions.class_probs[:, 0]
    ordered = sorted(match.negatives, key=lambda idx: (background[idx], idx))
    return ordered[:keep]


def smooth_l1(x: float) -> float:
    """Smooth L1: quadratic inside |x| < 1, linear outside; continuous at 1."""
    ax = abs(x)
    if ax < 1.0:
        return 0.5 * x * x
    return ax - 0.5


def _check_mined(match: MatchResult, mined_negatives: Sequence[int]) -> None:
    extra = set(mined_negatives) - set(match.negatives)
    if extra:
        raise ValueError(f"mined indexes {sorted(extra)} are not negatives of this match")


def classification_loss(
    predictions: PredictionMatrix,
    match: MatchResult,
    mined_negatives: Sequence[int],
) -> float:
    """Cross-entropy over positive boxes and mined background boxes.

    Unnormalized; :func:`total_loss` applies the single 1/N factor.
    """
    if predictions.num_boxes != match.num_anchors:
        raise ValueError(
            f"prediction rows ({predictions.num_boxes}) != anchors ({match.num_anchors})"
        )
    _check_mined(match, mined_negatives)
    probs = predictions.class_probs
    total = 0.0
    for p in match.positives:
        total -= np.log(max(probs[p.anchor_index, p.class_index], CONFIDENCE_FLOOR))
    for h in mined_negatives:
        total -= np.log(max(probs[h, 0], CONFIDENCE_FLOOR))
    return float(total)


def _positive_offset_targets(match: MatchResult, anchors) -> list[tuple[int, np.ndarray]]:
    boxes = _anchor_corner_boxes(anchors)
    if len(boxes) != match.num_anchors:
        raise ValueError(f"anchor count ({len(boxes)}) != match anchors ({match.num_anchors})")
    return [
        (p.anchor_index, np.array(encode_offsets(p.target, boxes[p.anchor_index]).as_tuple()))
        for p in match.positives
    ]


def localization_loss(predictions: PredictionMatrix, match: MatchResult, anchors) -> float:
    """Smooth-L1 between predicted offsets and encoded targets, summed over
    positives and the four coordinates. Unnormalized."""
    if predictions.num_boxes != match.num_anchors:
        raise ValueError(
            f"prediction rows ({predictions.num_boxes}) != anchors ({match.num_anchors})"
        )
    total = 0.0
    for idx, target in _positive_offset_targets(match, anchors):
        for b in range(4):
            total += smooth_l1(float(predictions.locations[idx, b] - target[b]))
    return total


def total_loss(
    predictions: PredictionMatrix,
    match: MatchResult,
    anchors,
    config: LossConfig | None = None,
    mined_negatives: Sequence[int] | None = None,
) -> float:
    """Combined loss ``(L_class + alpha * L_loc) / N``; 0 when N = 0.

    ``mined_negatives`` defaults to hard-negative mining at the standard
    3:1 ratio.
    """
    cfg = config or LossConfig()
    if match.num_positives == 0:
        return 0.0
    if mined_negatives is None:
        mined_negatives = hard_negative_mine(match, predictions)
    cls = classification_loss(predictions, match, mined_negatives)
    loc = localization_loss(predictions, match, anchors)
    return (cls + cfg.alpha * loc) / match.num_positives


def total_loss_gradients(
    predictions: PredictionMatrix,
    match: MatchResult,
    anchors,
    config: LossConfig | None = None,
    mined_negatives: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic d(total_loss)/d(prediction entries).

    Returns arrays shaped like ``class_probs`` and ``locations``. The
    mined-negative set is held fixed (mining is a discrete choice, not
    differentiated through); it defaults to the same 3:1 mining as
    :func:`total_loss`.
    """
    cfg = config or LossConfig()
    d_probs = np.zeros_like(predictions.class_probs)
    d_locs = np.zeros_like(predictions.locations)
    n = match.num_positives
    if n == 0:
        return d_probs, d_locs
    if mined_negatives is None:
        mined_negatives = hard_negative_mine(match, predictions)
    _check_mined(match, mined_negatives)

    probs = predictions.class_probs
    for p in match.positives:
        value = probs[p.anchor_index, p.class_index]
        if value > CONFIDENCE_FLOOR:
            d_probs[p.anchor_index, p.class_index] = -1.0 / (n * value)
    for h in mined_negatives:
        value = probs[h, 0]
        if value > CONFIDENCE_FLOOR:
            d_probs[h, 0] = -1.0 / (n * value)

    for idx, target in _positive_offset_targets(match, anchors):
        for b in range(4):
            x = float(predictions.locations[idx, b] - target[b])
            slope = x if abs(x) < 1.0 else (1.0 if x > 0 else -1.0)
            d_locs[idx, b] = cfg.alpha * slope / n
    return d_probs, d_locs
