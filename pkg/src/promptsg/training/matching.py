"""Set matching between ground-truth interactions and query predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ContractError
from .losses import LossWeights


@dataclass(frozen=True)
class MatchResult:
    """Injective assignment from ground-truth index to query index."""

    assignment: dict[int, int]
    unmatched_queries: frozenset[int]

    @property
    def matched_queries(self) -> frozenset[int]:
        return frozenset(self.assignment.values())


def hungarian_match(cost: np.ndarray) -> MatchResult:
    """Exact minimum-cost assignment of G ground truths to N_q queries."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ContractError(f"cost must be a 2-D matrix, got shape {cost.shape}")
    num_gt, num_queries = cost.shape
    if num_gt > num_queries:
        raise ContractError(f"{num_gt} ground truths exceed {num_queries} queries")
    if num_gt and not np.isfinite(cost).all():
        raise ContractError("cost matrix contains non-finite entries")
    if num_gt == 0:
        return MatchResult({}, frozenset(range(num_queries)))
    rows, cols = linear_sum_assignment(cost)
    assignment = {int(g): int(q) for g, q in zip(rows, cols)}
    unmatched = frozenset(range(num_queries)) - set(assignment.values())
    return MatchResult(assignment, unmatched)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def match_cost(
    gt_point: tuple[float, float],
    gt_object_class: int,
    gt_predicate_class: int,
    pred_point: np.ndarray,
    object_logits: np.ndarray,
    predicate_logits: np.ndarray,
    weights: LossWeights,
) -> float:
    """Point distance plus class negative log-likelihoods, loss-weighted."""
    delta = np.asarray(pred_point, dtype=np.float64) - np.asarray(gt_point, dtype=np.float64)
    point_term = float(delta @ delta)
    obj_term = float(-_log_softmax(np.asarray(object_logits, dtype=np.float64))[gt_object_class])
    rel_term = float(
        -_log_softmax(np.asarray(predicate_logits, dtype=np.float64))[gt_predicate_class]
    )
    return weights.l2 * point_term + weights.obj * obj_term + weights.rel * rel_term


def build_cost_matrix(
    gt_points: list[tuple[float, float]],
    gt_object_classes: list[int],
    gt_predicate_classes: list[int],
    pred_points: np.ndarray,
    object_logits: list[np.ndarray],
    predicate_logits: list[np.ndarray],
    weights: LossWeights,
) -> np.ndarray:
    num_gt, num_queries = len(gt_points), len(object_logits)
    cost = np.zeros((num_gt, num_queries), dtype=np.float64)
    for g in range(num_gt):
        for q in range(num_queries):
            cost[g, q] = match_cost(
                gt_points[g],
                gt_object_classes[g],
                gt_predicate_classes[g],
                pred_points[q],
                object_logits[q],
                predicate_logits[q],
                weights,
            )
    return cost
