import itertools
import math

import numpy as np
import pytest

from promptsg.errors import ContractError
from promptsg.training import LossWeights, build_cost_matrix, hungarian_match, match_cost


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Factorial enumeration over injective gt -> query assignments."""
    num_gt, num_queries = cost.shape
    best = math.inf
    for columns in itertools.permutations(range(num_queries), num_gt):
        best = min(best, sum(cost[g, q] for g, q in enumerate(columns)))
    return best


class TestHungarian:
    def test_diagonal_optimum(self):
        result = hungarian_match(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert result.assignment == {0: 0, 1: 1}
        assert result.unmatched_queries == frozenset()

    def test_three_by_three_fixture(self):
        cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        result = hungarian_match(cost)
        assert result.assignment == {0: 1, 1: 0, 2: 2}
        assert sum(cost[g, q] for g, q in result.assignment.items()) == 5.0

    def test_matches_brute_force_on_random_matrices(self, rng):
        for _ in range(300):
            num_gt = int(rng.integers(1, 6))
            num_queries = int(rng.integers(num_gt, 6))
            cost = rng.standard_normal((num_gt, num_queries))
            result = hungarian_match(cost)
            total = sum(cost[g, q] for g, q in result.assignment.items())
            assert total == pytest.approx(brute_force_min_cost(cost), abs=1e-12)

    def test_partition_invariant(self, rng):
        cost = rng.standard_normal((2, 5))
        result = hungarian_match(cost)
        assert result.matched_queries | result.unmatched_queries == set(range(5))
        assert not (result.matched_queries & result.unmatched_queries)
        assert len(set(result.assignment.values())) == len(result.assignment)

    def test_more_gt_than_queries_rejected(self):
        with pytest.raises(ContractError):
            hungarian_match(np.zeros((3, 2)))

    def test_nonfinite_rejected(self):
        with pytest.raises(ContractError):
            hungarian_match(np.array([[np.inf, 1.0]]))

    def test_empty_gt(self):
        result = hungarian_match(np.zeros((0, 3)))
        assert result.assignment == {}
        assert result.unmatched_queries == frozenset({0, 1, 2})


class TestMatchCost:
    def test_perfect_prediction_costs_zero(self):
        weights = LossWeights()
        logits_obj = np.array([50.0, 0.0, 0.0, 0.0])
        logits_rel = np.array([50.0, 0.0, 0.0])
        cost = match_cost((0.5, 0.5), 0, 0, np.array([0.5, 0.5]), logits_obj, logits_rel, weights)
        assert cost == pytest.approx(0.0, abs=1e-9)

    def test_hand_computed_uniform_case(self):
        # 20*0.125 + 10*ln(4) + 20*ln(3) = 38.335...
        weights = LossWeights()
        cost = match_cost(
            (0.25, 0.75),
            1,
            2,
            np.array([0.5, 0.5]),
            np.zeros(4),
            np.zeros(3),
            weights,
        )
        expected = 20 * 0.125 + 10 * math.log(4) + 20 * math.log(3)
        assert cost == pytest.approx(expected, abs=1e-9)
        assert cost == pytest.approx(38.335, abs=1e-3)

    def test_scaling_weights_preserves_assignment(self, rng):
        for _ in range(50):
            num_gt, num_queries = 3, 4
            gt_points = [tuple(rng.uniform(size=2)) for _ in range(num_gt)]
            gt_obj = [int(rng.integers(0, 4)) for _ in range(num_gt)]
            gt_rel = [int(rng.integers(0, 3)) for _ in range(num_gt)]
            pred_points = rng.uniform(size=(num_queries, 2))
            obj_logits = [rng.standard_normal(4) for _ in range(num_queries)]
            rel_logits = [rng.standard_normal(3) for _ in range(num_queries)]
            base = LossWeights()
            scaled = LossWeights(
                bce=base.bce, dice=base.dice, iou=base.iou,
                l2=base.l2 * 3.7, sub=base.sub, obj=base.obj * 3.7, rel=base.rel * 3.7,
            )
            cost_a = build_cost_matrix(gt_points, gt_obj, gt_rel, pred_points, obj_logits, rel_logits, base)
            cost_b = build_cost_matrix(gt_points, gt_obj, gt_rel, pred_points, obj_logits, rel_logits, scaled)
            assert np.allclose(cost_b, cost_a * 3.7)
            assert hungarian_match(cost_a).assignment == hungarian_match(cost_b).assignment
