"""Non-neural tooling for a real-time 2D detection pipeline.

Box geometry, class-aware NMS, scale-enhanced two-pass inference with
class-wise ensembling, anchor K-means, consensus annotation cleaning and
L1/L2 average-precision evaluation, plus replay and synthetic detector
backends and a latency budget harness.
"""

from rtdet.anchors import AnchorSet, HeatmapGrid, anchor_distance, center_heatmap, kmeans_anchors, small_subset
from rtdet.cleaning import CleanConfig, CleanResult, consensus_clean
from rtdet.evaluation import (
    APResult,
    EvalConfig,
    GroundTruthBox,
    Label,
    Level,
    PRPoint,
    average_precision,
    evaluate,
    match_frame,
    pr_curve,
    recall_for_area,
)
from rtdet.geometry import (
    BBox,
    Category,
    Detection,
    FrameMeta,
    ViewTransform,
    apply_transform,
    area,
    clip_to_frame,
    invert_transform,
    iou,
    make_enhancement_view,
)
from rtdet.pipeline import (
    DetectorBackend,
    EnhancementConfig,
    EnsembleConfig,
    LatencyReport,
    ReplayBackend,
    SleepBackend,
    classwise_ensemble,
    detect_frame,
    detect_frames,
    filter_small,
    run_enhanced_pass,
    run_plain_pass,
    scale_enhanced_detect,
)
from rtdet.simulate import (
    SceneConfig,
    SyntheticBackend,
    SyntheticDetectorConfig,
    detection_probability,
    generate_dataset,
    synthetic_detect,
)
from rtdet.suppression import NmsConfig, class_aware_nms, nms

__version__ = "0.1.0"
