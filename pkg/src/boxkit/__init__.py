"""Detection-box toolkit.

Framework-agnostic building blocks for single-stage detectors: default-box
generation (static or data-adaptive aspect ratios), box/ground-truth
matching with hard negative mining, the classification+localization loss,
bootstrap bagging with plurality-vote fusion of detector outputs, and
VOC-style mAP scoring.
"""

from .anchors import (
    STATIC_RATIOS,
    AnchorConfig,
    DefaultBox,
    DefaultBoxSet,
    adaptive_ratio_set,
    compute_scales,
    generate_default_boxes,
)
from .distribution import (
    BinConfig,
    ClassStats,
    Histogram,
    RepresentativeRatios,
    aspect_ratio_samples,
    build_histogram,
    class_stats,
    density_at,
    representative_ratios,
)
from .ensemble import (
    BagManifest,
    FusedDetection,
    FusionConfig,
    derive_bag_seed,
    fuse_detections,
    make_bags,
    plurality_vote,
    split_train_test,
)
from .evaluation import (
    ClassMetrics,
    ComparisonRow,
    EvalConfig,
    EvalReport,
    average_precision,
    compare_runs,
    evaluate_detections,
    mean_average_precision,
    pr_curve,
)
from .formats import (
    Detection,
    GroundTruthObject,
    GroundTruthRecord,
    ParseError,
    parse_annotations,
    parse_detections,
)
from .geometry import (
    BoundingBox,
    BoxOffsets,
    center_to_corner,
    corner_iou,
    corner_to_center,
    decode_offsets,
    encode_offsets,
    jaccard,
)
from .training import (
    LossConfig,
    MatchConfig,
    MatchResult,
    PositiveMatch,
    PredictionMatrix,
    classification_loss,
    hard_negative_mine,
    localization_loss,
    match_boxes,
    smooth_l1,
    total_loss,
    total_loss_gradients,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorConfig",
    "BagManifest",
    "BinConfig",
    "BoundingBox",
    "BoxOffsets",
    "ClassMetrics",
    "ClassStats",
    "ComparisonRow",
    "DefaultBox",
    "DefaultBoxSet",
    "Detection",
    "EvalConfig",
    "EvalReport",
    "FusedDetection",
    "FusionConfig",
    "GroundTruthObject",
    "GroundTruthRecord",
    "Histogram",
    "LossConfig",
    "MatchConfig",
    "MatchResult",
    "ParseError",
    "PositiveMatch",
    "PredictionMatrix",
    "RepresentativeRatios",
    "STATIC_RATIOS",
    "adaptive_ratio_set",
    "aspect_ratio_samples",
    "average_precision",
    "build_histogram",
    "center_to_corner",
    "class_stats",
    "classification_loss",
    "compare_runs",
    "compute_scales",
    "corner_iou",
    "corner_to_center",
    "decode_offsets",
    "density_at",
    "derive_bag_seed",
    "encode_offsets",
    "evaluate_detections",
    "fuse_detections",
    "generate_default_boxes",
    "hard_negative_mine",
    "jaccard",
    "localization_loss",
    "make_bags",
    "match_boxes",
    "mean_average_precision",
    "parse_annotations",
    "parse_detections",
    "plurality_vote",
    "pr_curve",
    "representative_ratios",
    "smooth_l1",
    "split_train_test",
    "total_loss",
    "total_loss_gradients",
]
