"""Semantic heads: entity classification and predicate prediction.

Entity classes are read from features pooled under a segmentation mask; the
predicate is read from the concatenated subject and object query tokens, so
swapping the pair flips the direction the head sees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .backbone import FeatureGrid, _Mlp, majority_cells, mask_pool
from .core.masks import BinaryMask, rle_decode
from .core.types import Vocabulary
from .errors import ContractError, NumericalError


@dataclass(frozen=True)
class TripletPrediction:
    """Class distributions for one candidate interaction.

    ``subject_logits`` has no null entry (the user asserted a subject);
    object and predicate logits include their null class last. A prediction
    is active iff neither argmax lands on null; confidence is the product of
    the three per-head max probabilities with null entries excluded.
    """

    subject_logits: np.ndarray = field(repr=False)
    object_logits: np.ndarray = field(repr=False)
    predicate_logits: np.ndarray = field(repr=False)
    confidence: float = 0.0
    active: bool = True

    @property
    def subject_class(self) -> int:
        return int(np.argmax(self.subject_logits))

    @property
    def object_class(self) -> int:
        return int(np.argmax(self.object_logits))

    @property
    def predicate_class(self) -> int:
        return int(np.argmax(self.predicate_logits))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def score_triplet(
    subject_logits: np.ndarray, object_logits: np.ndarray, predicate_logits: np.ndarray
) -> TripletPrediction:
    """Build one TripletPrediction with its confidence and activity flag."""
    for name, logits in (
        ("subject", subject_logits),
        ("object", object_logits),
        ("predicate", predicate_logits),
    ):
        if not np.isfinite(logits).all():
            raise NumericalError(f"non-finite {name} logits")
    p_sub = _softmax(subject_logits)
    p_obj = _softmax(object_logits)
    p_rel = _softmax(predicate_logits)
    null_obj = len(object_logits) - 1
    null_rel = len(predicate_logits) - 1
    active = int(np.argmax(p_obj)) != null_obj and int(np.argmax(p_rel)) != null_rel
    confidence = float(p_sub.max() * p_obj[:null_obj].max() * p_rel[:null_rel].max())
    return TripletPrediction(
        subject_logits=np.asarray(subject_logits, dtype=np.float64),
        object_logits=np.asarray(object_logits, dtype=np.float64),
        predicate_logits=np.asarray(predicate_logits, dtype=np.float64),
        confidence=confidence,
        active=active,
    )


def assemble_triplets(
    subject_logits: np.ndarray,
    object_logits: list[np.ndarray],
    predicate_logits: list[np.ndarray],
) -> list[TripletPrediction]:
    """Score every query and sort actives first by descending confidence.

    Inactive predictions (null object or null predicate argmax) stay in the
    returned list for diagnostics; callers exporting a scene graph keep only
    the active ones.
    """
    if len(object_logits) != len(predicate_logits):
        raise ContractError("object and predicate logit counts differ")
    triplets = [
        score_triplet(subject_logits, obj, rel)
        for obj, rel in zip(object_logits, predicate_logits)
    ]
    return sorted(triplets, key=lambda t: (not t.active, -t.confidence))


class SemanticClassifier(nn.Module):
    """Subject/object class heads over pooled features plus a predicate head."""

    def __init__(self, token_dim: int, num_object_classes: int, num_predicate_classes: int):
        super().__init__()
        if num_object_classes < 2 or num_predicate_classes < 2:
            raise ContractError("class counts must include at least one real class plus null")
        self.token_dim = token_dim
        self.num_object_classes = num_object_classes
        self.num_predicate_classes = num_predicate_classes
        self.subject_head = _Mlp(token_dim, token_dim, num_object_classes - 1)
        self.object_head = _Mlp(token_dim, token_dim, num_object_classes)
        self.predicate_head = _Mlp(2 * token_dim, token_dim, num_predicate_classes)

    def pool_entity(self, grid: FeatureGrid, mask: BinaryMask | torch.Tensor) -> torch.Tensor:
        """Masked mean feature; tiny masks fall back to global mean pooling."""
        if isinstance(mask, BinaryMask):
            mask = torch.from_numpy(rle_decode(mask).astype(np.float32)).to(grid.values.dtype)
        pooled = mask_pool(grid.values, majority_cells(mask, grid.stride))
        if pooled is None:
            pooled = grid.values.reshape(-1, grid.channels).mean(dim=0)
        return pooled

    def classify_pooled(self, pooled: torch.Tensor, head: str) -> torch.Tensor:
        if not bool(torch.isfinite(pooled).all()):
            raise NumericalError("non-finite pooled features")
        if head == "subject":
            return self.subject_head(pooled)
        if head == "object":
            return self.object_head(pooled)
        raise ContractError(f"unknown head {head!r}")

    def classify_entity(
        self, grid: FeatureGrid, mask: BinaryMask | torch.Tensor, head: str
    ) -> torch.Tensor:
        return self.classify_pooled(self.pool_entity(grid, mask), head)

    def classify_predicate(
        self, subject_token: torch.Tensor, object_token: torch.Tensor
    ) -> torch.Tensor:
        if subject_token.shape != object_token.shape:
            raise ContractError(
                f"token shapes differ: {tuple(subject_token.shape)} vs {tuple(object_token.shape)}"
            )
        return self.predicate_head(torch.cat((subject_token, object_token)))


def vocabulary_head_sizes(vocab: Vocabulary) -> tuple[int, int]:
    return vocab.num_object_classes, vocab.num_predicate_classes
