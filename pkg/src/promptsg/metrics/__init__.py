from .recall import (
    IOU_MODES,
    mask_centroid_normalized,
    point_recall,
    point_recall_frame,
    recall_at_k,
    spatial_recall,
)
from .protocol import (
    METRIC_NAMES,
    EvalConfig,
    EvalReport,
    MetricSummary,
    build_eval_prompt,
    evaluate_episode,
    make_heatmap_discoverer,
    render_report_table,
    robustness_protocol,
    save_report,
    subject_prompt_frame,
)

__all__ = [
    "EvalConfig",
    "EvalReport",
    "IOU_MODES",
    "METRIC_NAMES",
    "MetricSummary",
    "build_eval_prompt",
    "evaluate_episode",
    "make_heatmap_discoverer",
    "mask_centroid_normalized",
    "point_recall",
    "point_recall_frame",
    "recall_at_k",
    "render_report_table",
    "robustness_protocol",
    "save_report",
    "spatial_recall",
    "subject_prompt_frame",
]
