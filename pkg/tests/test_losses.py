import numpy as np
import pytest
import torch

from promptsg.errors import NumericalError
from promptsg.training import (
    LOSS_TERMS,
    LossWeights,
    StepPredictions,
    dice_loss,
    hard_mask_iou,
    total_loss,
)


def perfect_predictions(h=6, w=6):
    target = torch.zeros(h, w)
    target[1:4, 1:4] = 1.0
    logits = (target * 2 - 1) * 60.0  # saturated
    preds = StepPredictions()
    preds.mask_pairs.append((logits, target, torch.tensor(1.0)))
    preds.point_pairs.append((torch.tensor([0.3, 0.7]), torch.tensor([0.3, 0.7])))
    preds.subject_terms.append((torch.tensor([60.0, 0.0, 0.0]), 0))
    preds.object_terms.append((torch.tensor([60.0, 0.0, 0.0, 0.0]), 0, False))
    preds.predicate_terms.append((torch.tensor([0.0, 60.0, 0.0]), 1, False))
    return preds


class TestTerms:
    def test_perfect_predictions_near_zero(self):
        loss, breakdown = total_loss(perfect_predictions(), LossWeights())
        assert float(loss) < 1e-6
        for term in LOSS_TERMS:
            assert float(breakdown[term]) < 1e-6

    def test_dice_of_identical_hard_masks_is_zero(self):
        mask = torch.zeros(5, 5)
        mask[2:4, 1:3] = 1.0
        assert float(dice_loss(mask, mask)) == 0.0

    def test_dice_of_disjoint_masks_near_one(self):
        a = torch.zeros(4, 4)
        a[0, 0] = 1.0
        b = torch.zeros(4, 4)
        b[3, 3] = 1.0
        assert float(dice_loss(a, b)) == pytest.approx(1.0, abs=1e-5)

    def test_hard_iou_empty_vs_empty(self):
        logits = torch.full((4, 4), -5.0)
        assert float(hard_mask_iou(logits, torch.zeros(4, 4))) == 1.0

    def test_confidence_target_zero_for_empty_ground_truth(self):
        # a background prompt that wrongly predicts a mask with confidence 1
        preds = StepPredictions()
        logits = torch.full((4, 4), 8.0)
        preds.mask_pairs.append((logits, torch.zeros(4, 4), torch.tensor(1.0)))
        _, breakdown = total_loss(preds, LossWeights())
        assert float(breakdown["iou"]) == pytest.approx(1.0)

    def test_total_is_weighted_sum_of_breakdown(self, rng):
        weights = LossWeights(bce=3.0, dice=0.5, iou=2.0, l2=7.0, sub=1.0, obj=4.0, rel=9.0)
        preds = StepPredictions()
        for _ in range(3):
            logits = torch.from_numpy(rng.standard_normal((5, 5)).astype(np.float64))
            target = torch.from_numpy((rng.random((5, 5)) > 0.5).astype(np.float64))
            preds.mask_pairs.append((logits, target, torch.tensor(0.4, dtype=torch.float64)))
        preds.point_pairs.append(
            (torch.tensor([0.1, 0.9], dtype=torch.float64), torch.tensor([0.4, 0.2], dtype=torch.float64))
        )
        preds.subject_terms.append((torch.from_numpy(rng.standard_normal(3)), 1))
        preds.object_terms.append((torch.from_numpy(rng.standard_normal(4)), 3, True))
        preds.predicate_terms.append((torch.from_numpy(rng.standard_normal(3)), 0, False))
        total, breakdown = total_loss(preds, weights)
        expected = sum(getattr(weights, t) * float(breakdown[t]) for t in LOSS_TERMS)
        assert abs(float(total) - expected) < 1e-9

    def test_every_term_nonnegative(self, rng):
        for _ in range(20):
            preds = StepPredictions()
            logits = torch.from_numpy(rng.standard_normal((4, 4)))
            target = torch.from_numpy((rng.random((4, 4)) > 0.5).astype(np.float64))
            preds.mask_pairs.append((logits, target, torch.tensor(0.5, dtype=torch.float64)))
            preds.point_pairs.append(
                (
                    torch.from_numpy(rng.uniform(size=2)),
                    torch.from_numpy(rng.uniform(size=2)),
                )
            )
            preds.object_terms.append((torch.from_numpy(rng.standard_normal(5)), 4, True))
            _, breakdown = total_loss(preds, LossWeights())
            for term in LOSS_TERMS:
                assert float(breakdown[term]) >= 0.0

    def test_nonfinite_loss_names_term(self):
        preds = StepPredictions()
        preds.point_pairs.append((torch.tensor([float("inf"), 0.0]), torch.tensor([0.0, 0.0])))
        with pytest.raises(NumericalError) as err:
            total_loss(preds, LossWeights())
        assert "l2" in str(err.value)

    def test_empty_predictions_rejected(self):
        with pytest.raises(NumericalError):
            total_loss(StepPredictions(), LossWeights())

    def test_null_weight_discounts_null_terms(self):
        logits = torch.tensor([0.0, 0.0, 2.0])
        preds_a = StepPredictions()
        preds_a.object_terms.append((logits, 0, True))
        preds_a.subject_terms.append((torch.tensor([5.0, 0.0]), 0))
        full = total_loss(preds_a, LossWeights())[1]["obj"]

        # a second, cheap real term: discounting nulls shifts the mean toward it
        preds_b = StepPredictions()
        preds_b.object_terms.append((logits, 0, True))
        preds_b.object_terms.append((torch.tensor([9.0, 0.0, 0.0]), 0, False))
        preds_b.subject_terms.append((torch.tensor([5.0, 0.0]), 0))
        blended_even = total_loss(preds_b, LossWeights())[1]["obj"]
        blended_discounted = total_loss(preds_b, LossWeights(null_class_weight=0.1))[1]["obj"]
        assert float(blended_discounted) < float(blended_even) < float(full)
