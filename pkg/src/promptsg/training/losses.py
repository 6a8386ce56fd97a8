"""The multi-task objective and its per-term breakdown."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..errors import NumericalError

LOSS_TERMS = ("bce", "dice", "iou", "l2", "sub", "obj", "rel")


@dataclass(frozen=True)
class LossWeights:
    bce: float = 10.0
    dice: float = 1.0
    iou: float = 1.0
    l2: float = 20.0
    sub: float = 10.0
    obj: float = 10.0
    rel: float = 20.0
    null_class_weight: float = 1.0  # down-weights null-target terms inside obj/rel

    def __post_init__(self):
        for term in LOSS_TERMS + ("null_class_weight",):
            if getattr(self, term) < 0:
                raise ValueError(f"loss weight {term} must be >= 0")

    def as_dict(self) -> dict[str, float]:
        return {term: getattr(self, term) for term in LOSS_TERMS}


@dataclass
class StepPredictions:
    """Everything one optimization step supervises, merged across a batch.

    mask_pairs:      (mask logits (H,W), target mask (H,W) float, predicted
                      confidence scalar) per supervised segmentation.
    point_pairs:     (predicted point (2,), target point (2,)) per matched query.
    subject_terms:   (subject logits, target class).
    object_terms:    (object logits, target class, targets_null).
    predicate_terms: (predicate logits, target class, targets_null).
    """

    mask_pairs: list[tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = field(default_factory=list)
    point_pairs: list[tuple[torch.Tensor, torch.Tensor]] = field(default_factory=list)
    subject_terms: list[tuple[torch.Tensor, int]] = field(default_factory=list)
    object_terms: list[tuple[torch.Tensor, int, bool]] = field(default_factory=list)
    predicate_terms: list[tuple[torch.Tensor, int, bool]] = field(default_factory=list)

    def merge(self, other: "StepPredictions") -> None:
        self.mask_pairs.extend(other.mask_pairs)
        self.point_pairs.extend(other.point_pairs)
        self.subject_terms.extend(other.subject_terms)
        self.object_terms.extend(other.object_terms)
        self.predicate_terms.extend(other.predicate_terms)


def dice_loss(probs: torch.Tensor, target: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Soft Dice; exactly zero when probs equal the (binary) target."""
    inter = (probs * target).sum()
    total = probs.sum() + target.sum()
    return 1.0 - (2.0 * inter + eps) / (total + eps)


def hard_mask_iou(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """IoU of the thresholded mask against the target; empty-vs-empty is 1."""
    pred = logits > 0
    tgt = target > 0.5
    union = (pred | tgt).sum()
    if union == 0:
        return torch.ones((), dtype=logits.dtype)
    return (pred & tgt).sum().to(logits.dtype) / union.to(logits.dtype)


def _mean(values: list[torch.Tensor], like: torch.Tensor) -> torch.Tensor:
    if not values:
        return torch.zeros((), dtype=like.dtype)
    return torch.stack(values).mean()


def _weighted_class_term(
    terms: list[tuple[torch.Tensor, int, bool]], null_weight: float, like: torch.Tensor
) -> torch.Tensor:
    if not terms:
        return torch.zeros((), dtype=like.dtype)
    losses, weights = [], []
    for logits, target, is_null in terms:
        ce = F.cross_entropy(logits[None], torch.tensor([target]))
        losses.append(ce)
        weights.append(null_weight if is_null else 1.0)
    weight_tensor = torch.tensor(weights, dtype=like.dtype)
    return (torch.stack(losses) * weight_tensor).sum() / weight_tensor.sum().clamp_min(1e-12)


def total_loss(
    predictions: StepPredictions, weights: LossWeights
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Weighted sum over all loss terms plus the unweighted breakdown.

    The breakdown maps each term name to its unweighted scalar, so
    ``total == sum(weights[k] * breakdown[k])``.
    """
    anchor = None
    for group in (
        predictions.mask_pairs,
        predictions.point_pairs,
        predictions.subject_terms,
        predictions.object_terms,
        predictions.predicate_terms,
    ):
        if group:
            anchor = group[0][0]
            break
    if anchor is None:
        raise NumericalError("empty StepPredictions: nothing to supervise")

    bce_values, dice_values, iou_values = [], [], []
    for logits, target, confidence in predictions.mask_pairs:
        bce_values.append(F.binary_cross_entropy_with_logits(logits, target))
        dice_values.append(dice_loss(torch.sigmoid(logits), target))
        if target.sum() > 0:
            actual = hard_mask_iou(logits.detach(), target)
        else:
            # no true object behind the prompt: confidence is pushed to zero,
            # giving "subject not found" its low-confidence signal
            actual = torch.zeros((), dtype=logits.dtype)
        iou_values.append((confidence - actual) ** 2)

    l2_values = [((pred - tgt) ** 2).sum() for pred, tgt in predictions.point_pairs]
    sub_values = [
        F.cross_entropy(logits[None], torch.tensor([target]))
        for logits, target in predictions.subject_terms
    ]

    breakdown = {
        "bce": _mean(bce_values, anchor),
        "dice": _mean(dice_values, anchor),
        "iou": _mean(iou_values, anchor),
        "l2": _mean(l2_values, anchor),
        "sub": _mean(sub_values, anchor),
        "obj": _weighted_class_term(predictions.object_terms, weights.null_class_weight, anchor),
        "rel": _weighted_class_term(predictions.predicate_terms, weights.null_class_weight, anchor),
    }
    total = sum(getattr(weights, term) * breakdown[term] for term in LOSS_TERMS)
    if not bool(torch.isfinite(total)):
        bad = [term for term in LOSS_TERMS if not bool(torch.isfinite(breakdown[term]))]
        raise NumericalError(f"non-finite loss in term(s): {', '.join(bad) or 'total'}")
    return total, breakdown
