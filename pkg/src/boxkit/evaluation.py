"""VOC-style detection scoring: per-class AP, mAP, comparison tables.

Detections are ranked by score and matched greedily to unmatched ground
truths of the same image at an IoU threshold; the precision/recall curve
is integrated either over the full precision envelope (default) or at the
classic 11 recall points. Classes without any ground truth cannot define
recall, so they are flagged and skipped in the mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .formats import Detection, GroundTruthRecord
from .geometry import corner_iou

_INTERPOLATION_MODES = ("all-point", "11-point")


@dataclass(frozen=True)
class EvalConfig:
    """True-positive IoU threshold and AP interpolation mode."""

    iou_threshold: float = 0.5
    interpolation: str = "all-point"

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"IoU threshold must be in (0, 1), got {self.iou_threshold}")
        if self.interpolation not in _INTERPOLATION_MODES:
            raise ValueError(
                f"interpolation must be one of {_INTERPOLATION_MODES}, got {self.interpolation!r}"
            )


@dataclass(frozen=True)
class ClassMetrics:
    """Scoring outcome for one class; ``ap`` is None when skipped."""

    label: str
    ap: float | None
    true_positives: int
    false_positives: int
    ground_truths: int
    skipped: bool


@dataclass(frozen=True)
class EvalReport:
    """Per-class metrics plus the mean AP over evaluable classes."""

    per_class: tuple[ClassMetrics, ...]
    mean_ap: float
    iou_threshold: float
    interpolation: str

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "interpolation": self.interpolation,
            "mean_ap": self.mean_ap,
            "classes": [
                {
                    "label": m.label,
                    "ap": m.ap,
                    "true_positives": m.true_positives,
                    "false_positives": m.false_positives,
                    "ground_truths": m.ground_truths,
                    "skipped": m.skipped,
                }
                for m in self.per_class
            ],
        }


@dataclass(frozen=True)
class ComparisonRow:
    """One run against the baseline, improvement in mAP percentage points."""

    name: str
    mean_ap: float
    improvement: float


def _rank_and_match(
    detections: Sequence[Detection],
    ground_truths: Sequence[tuple[str, tuple[float, float, float, float]]],
    iou_threshold: float,
) -> list[bool]:
    """True-positive flag per detection, in descending-score order.

    Greedy single-match: each ranked detection claims the best-overlap
    still-unmatched ground truth in its image if that IoU reaches the
    threshold; duplicates of a claimed ground truth are false positives.
    """
    gt_by_image: dict[str, list[tuple[float, float, float, float]]] = {}
    for image_id, box in ground_truths:
        gt_by_image.setdefault(image_id, []).append(box)
    matched = {image_id: [False] * len(boxes) for image_id, boxes in gt_by_image.items()}

    flags = []
    for det in sorted(detections, key=lambda d: -d.score):
        candidates = gt_by_image.get(det.image_id, [])
        best_iou, best_idx = 0.0, -1
        for idx, gt_box in enumerate(candidates):
            if matched[det.image_id][idx]:
                continue
            overlap = corner_iou(det.box, gt_box)
            if overlap > best_iou:
                best_iou, best_idx = overlap, idx
        hit = best_idx >= 0 and best_iou >= iou_threshold
        if hit:
            matched[det.image_id][best_idx] = True
        flags.append(hit)
    return flags


def pr_curve(
    detections: Sequence[Detection],
    ground_truths: Sequence[tuple[str, tuple[float, float, float, float]]],
    config: EvalConfig | None = None,
) -> list[tuple[float, float]]:
    """Cumulative (recall, precision) points for one class.

    ``ground_truths`` are (image_id, corner box) pairs. Detections are
    ranked by score (ties keep input order) and matched greedily, one
    ground truth each; every rank contributes one curve point.
    """
    cfg = config or EvalConfig()
    if len(ground_truths) == 0:
        raise ValueError("no ground truths for this class; recall is undefined")
    total_gt = len(ground_truths)
    curve = []
    tp = fp = 0
    for hit in _rank_and_match(detections, ground_truths, cfg.iou_threshold):
        if hit:
            tp += 1
        else:
            fp += 1
        curve.append((tp / total_gt, tp / (tp + fp)))
    return curve


def average_precision(
    curve: Sequence[tuple[float, float]], config: EvalConfig | None = None
) -> float:
    """Integrate a PR curve into a single AP value in [0, 1].

    All-point mode integrates the precision envelope (max precision at or
    beyond each recall) over recall; 11-point mode averages the envelope
    at recalls 0.0, 0.1, ..., 1.0. An empty curve scores 0.
    """
    cfg = config or EvalConfig()
    if len(curve) == 0:
        return 0.0
    recalls = [r for r, _ in curve]
    envelope = list(curve)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = (envelope[i][0], max(envelope[i][1], envelope[i + 1][1]))

    if cfg.interpolation == "11-point":
        total = 0.0
        for step in range(11):
            q = step / 10.0
            precisions = [p for (r, p) in envelope if r >= q]
            total += max(precisions) if precisions else 0.0
        return total / 11.0

    ap = 0.0
    previous_recall = 0.0
    for (r, p) in envelope:
        ap += (r - previous_recall) * p
        previous_recall = r
    return ap


def mean_average_precision(per_class_aps: Sequence[float]) -> float:
    """Arithmetic mean of per-class APs."""
    if len(per_class_aps) == 0:
        raise ValueError("no evaluable classes")
    return sum(per_class_aps) / len(per_class_aps)


def evaluate_detections(
    detections: Sequence[Detection],
    annotations: Sequence[GroundTruthRecord],
    config: EvalConfig | None = None,
) -> EvalReport:
    """Score detections against annotations, one AP per class.

    Classes are the union of annotation and detection labels, sorted.
    Classes with no ground truth are reported (their detections counted as
    false positives) but flagged and excluded from the mean.
    """
    cfg = config or EvalConfig()
    gt_by_class: dict[str, list[tuple[str, tuple[float, float, float, float]]]] = {}
    for record in annotations:
        for obj in record.objects:
            box = (obj.xmin, obj.ymin, obj.xmax, obj.ymax)
            gt_by_class.setdefault(obj.label, []).append((record.image_id, box))
    det_by_class: dict[str, list[Detection]] = {}
    for det in detections:
        det_by_class.setdefault(det.label, []).append(det)

    labels = sorted(set(gt_by_class) | set(det_by_class))
    metrics = []
    evaluable_aps = []
    for label in labels:
        class_gts = gt_by_class.get(label, [])
        class_dets = det_by_class.get(label, [])
        if not class_gts:
            metrics.append(
                ClassMetrics(label, None, 0, len(class_dets), 0, skipped=True)
            )
            continue
        flags = _rank_and_match(class_dets, class_gts, cfg.iou_threshold)
        tp = sum(flags)
        fp = len(flags) - tp
        curve = pr_curve(class_dets, class_gts, cfg)
        ap = average_precision(curve, cfg)
        metrics.append(ClassMetrics(label, ap, tp, fp, len(class_gts), skipped=False))
        evaluable_aps.append(ap)
    return EvalReport(
        per_class=tuple(metrics),
        mean_ap=mean_average_precision(evaluable_aps),
        iou_threshold=cfg.iou_threshold,
        interpolation=cfg.interpolation,
    )


def compare_runs(
    runs: Mapping[str, float] | Sequence[tuple[str, float]], baseline: str
) -> list[ComparisonRow]:
    """Improvement of each run's mAP over a named baseline.

    Improvements are in mAP percentage points, rounded to one decimal; the
    baseline's own row reads 0.0. Rows keep the input order.
    """
    items = list(runs.items()) if isinstance(runs, Mapping) else list(runs)
    values = dict(items)
    if baseline not in values:
        raise ValueError(f"baseline '{baseline}' not among runs {sorted(values)}")
    base = values[baseline]
    return [
        ComparisonRow(name, value, round((value - base) * 100.0, 1))
        for name, value in items
    ]


def format_report(report: EvalReport) -> str:
    """Fixed-width text rendering of an evaluation report."""
    lines = [
        f"# IoU threshold {report.iou_threshold:g}, {report.interpolation} interpolation",
        "label\tap\ttp\tfp\tgt",
    ]
    for m in report.per_class:
        ap = "skipped" if m.ap is None else f"{m.ap:.9f}"
        lines.append(
            f"{m.label}\t{ap}\t{m.true_positives}\t{m.false_positives}\t{m.ground_truths}"
        )
    lines.append(f"mAP\t{report.mean_ap:.9f}")
    return "\n".join(lines) + "\n"


def format_comparison(rows: Sequence[ComparisonRow], baseline: str) -> str:
    """Table of runs with their mAP and percentage-point improvement."""
    lines = [f"# baseline: {baseline}", "run\tmAP\timprovement"]
    for row in rows:
        lines.append(f"{row.name}\t{row.mean_ap:.9f}\t{row.improvement:.1f}")
    return "\n".join(lines) + "\n"
