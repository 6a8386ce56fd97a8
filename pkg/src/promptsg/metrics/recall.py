"""Recall-based metrics over ranked interaction tracklets.

Matching discipline: predictions are considered in confidence order and each
prediction/ground-truth may be used once; the matching itself is exact
maximum bipartite matching over the compatibility graph (augmenting paths),
so the reported recall equals what exhaustive assignment enumeration finds.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core.masks import BinaryMask, point_in_mask, rle_decode, tube_iou
from ..core.types import InteractionTracklet
from ..errors import ContractError

IOU_MODES = ("tube", "frame_avg")


def _check_sorted(predictions: list[InteractionTracklet]) -> None:
    confs = [p.confidence for p in predictions]
    if any(a < b for a, b in zip(confs, confs[1:])):
        raise ContractError("predictions must be sorted by descending confidence")


def _labels_match(pred: InteractionTracklet, gt: InteractionTracklet) -> bool:
    return (
        pred.subject_class == gt.subject_class
        and pred.object_class == gt.object_class
        and pred.predicate_class == gt.predicate_class
    )


def _spatial_match(pred: InteractionTracklet, gt: InteractionTracklet, tau: float, iou_mode: str) -> bool:
    return (
        tube_iou(pred.subject_tube, gt.subject_tube, iou_mode) >= tau
        and tube_iou(pred.object_tube, gt.object_tube, iou_mode) >= tau
    )


def _max_matching(compatible: np.ndarray) -> int:
    """Maximum bipartite matching size; rows are tried in the given order."""
    num_preds, num_gt = compatible.shape
    owner = [-1] * num_gt

    def assign(p: int, visited: list[bool]) -> bool:
        for g in range(num_gt):
            if compatible[p, g] and not visited[g]:
                visited[g] = True
                if owner[g] == -1 or assign(owner[g], visited):
                    owner[g] = p
                    return True
        return False

    return sum(assign(p, [False] * num_gt) for p in range(num_preds))


def recall_at_k(
    predictions: list[InteractionTracklet],
    ground_truth: list[InteractionTracklet],
    k: int,
    tau: float,
    iou_mode: str = "tube",
) -> float:
    """Fraction of ground truths matched by a top-k prediction on labels and both IoUs."""
    if k < 1:
        raise ContractError("k must be >= 1")
    if iou_mode not in IOU_MODES:
        raise ContractError(f"unknown iou_mode {iou_mode!r}")
    _check_sorted(predictions)
    if not ground_truth:
        return 1.0
    top = predictions[:k]
    compatible = np.zeros((len(top), len(ground_truth)), dtype=bool)
    for p, pred in enumerate(top):
        for g, gt in enumerate(ground_truth):
            compatible[p, g] = _labels_match(pred, gt) and _spatial_match(pred, gt, tau, iou_mode)
    return _max_matching(compatible) / len(ground_truth)


def spatial_recall(
    predictions: list[InteractionTracklet],
    ground_truth: list[InteractionTracklet],
    tau: float,
    iou_mode: str = "tube",
) -> float:
    """Recall on the spatial criterion alone; labels are ignored entirely."""
    if iou_mode not in IOU_MODES:
        raise ContractError(f"unknown iou_mode {iou_mode!r}")
    _check_sorted(predictions)
    if not ground_truth:
        return 1.0
    compatible = np.zeros((len(predictions), len(ground_truth)), dtype=bool)
    for p, pred in enumerate(predictions):
        for g, gt in enumerate(ground_truth):
            compatible[p, g] = _spatial_match(pred, gt, tau, iou_mode)
    return _max_matching(compatible) / len(ground_truth)


def mask_centroid_normalized(mask: BinaryMask) -> tuple[float, float]:
    rows, cols = np.nonzero(rle_decode(mask))
    if rows.size == 0:
        raise ContractError("empty mask has no centroid")
    return ((cols.mean() + 0.5) / mask.width, (rows.mean() + 0.5) / mask.height)


def point_recall_frame(points: np.ndarray, gt_masks: list[BinaryMask]) -> float | None:
    """In-mask fraction of the Hungarian-paired points on one frame.

    Pairing minimizes squared point-to-centroid distance; frames without
    ground-truth objects return None (skipped by the aggregate).
    """
    if not gt_masks:
        return None
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0
    centroids = [mask_centroid_normalized(m) for m in gt_masks]
    cost = np.zeros((len(gt_masks), len(points)))
    for g, centroid in enumerate(centroids):
        deltas = points - np.asarray(centroid)
        cost[g] = (deltas**2).sum(axis=1)
    rows, cols = linear_sum_assignment(cost)
    hits = sum(
        point_in_mask((float(points[p][0]), float(points[p][1])), gt_masks[g])
        for g, p in zip(rows, cols)
    )
    return hits / len(rows)


def point_recall(
    frame_points: dict[int, np.ndarray], frame_gt_masks: dict[int, list[BinaryMask]]
) -> float:
    """Per-frame point recall averaged over frames that carry ground truth."""
    values = []
    for t, gt_masks in frame_gt_masks.items():
        if not gt_masks:
            continue
        points = frame_points.get(t, np.zeros((0, 2)))
        value = point_recall_frame(points, gt_masks)
        if value is not None:
            values.append(value)
    if not values:
        return 0.0
    return float(np.mean(values))
