"""Geometric relation rules and the standalone ground-truth oracle.

Relations are pure functions of the emitted per-frame masks, so the labels a
clip ships with can always be recomputed from its masks alone. The rule list
is ordered by priority; the first rule that fires labels the pair:

* ``touching`` - the 1-px dilation of the subject mask overlaps the object.
* ``above``    - subject centroid is higher by a margin and the pair is
                 within the proximity radius (directional).
* ``near``     - centroid distance within the proximity radius (symmetric).

A pair with an empty mask on a frame has no relation on that frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

RELATION_NAMES = ("touching", "above", "near")

_DILATE_STRUCTURE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class RelationParams:
    """Thresholds shared by the generator and the oracle."""

    near_dist_px: float
    above_margin_px: float = 2.0


def mask_centroid(mask: np.ndarray) -> tuple[float, float] | None:
    """(row, col) centroid of a dense bool mask, or None when empty."""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return None
    return float(rows.mean()), float(cols.mean())


def frame_relation(
    subject_mask: np.ndarray,
    object_mask: np.ndarray,
    params: RelationParams,
    num_relations: int = len(RELATION_NAMES),
) -> int | None:
    """Highest-priority relation index for an ordered mask pair, or None."""
    c_s = mask_centroid(subject_mask)
    c_o = mask_centroid(object_mask)
    if c_s is None or c_o is None:
        return None
    dist = float(np.hypot(c_s[0] - c_o[0], c_s[1] - c_o[1]))

    if num_relations >= 1:
        dilated = ndimage.binary_dilation(subject_mask, structure=_DILATE_STRUCTURE)
        if bool((dilated & object_mask.astype(bool)).any()):
            return 0
    if num_relations >= 2 and dist <= params.near_dist_px:
        if c_s[0] + params.above_margin_px < c_o[0]:
            return 1
    if num_relations >= 3 and dist <= params.near_dist_px:
        return 2
    return None


def derive_frame_relations(
    masks: list[np.ndarray],
    params: RelationParams,
    num_relations: int,
) -> dict[tuple[int, int], int]:
    """Relations between every ordered entity pair on one frame."""
    relations: dict[tuple[int, int], int] = {}
    for i, m_i in enumerate(masks):
        for j, m_j in enumerate(masks):
            if i == j:
                continue
            rel = frame_relation(m_i, m_j, params, num_relations)
            if rel is not None:
                relations[(i, j)] = rel
    return relations


def derive_interaction_spans(
    per_frame: list[dict[tuple[int, int], int]],
) -> list[tuple[int, int, int, int, int]]:
    """Collapse per-frame relations into maximal constant-label runs.

    Returns (subject_entity, object_entity, relation, t_start, t_end) tuples
    ordered by (t_start, subject, object).
    """
    spans: list[tuple[int, int, int, int, int]] = []
    open_runs: dict[tuple[int, int], tuple[int, int]] = {}  # pair -> (relation, t_start)
    for t, relations in enumerate(per_frame):
        for pair, (rel, t0) in list(open_runs.items()):
            if relations.get(pair) != rel:
                spans.append((pair[0], pair[1], rel, t0, t - 1))
                del open_runs[pair]
        for pair, rel in relations.items():
            if pair not in open_runs:
                open_runs[pair] = (rel, t)
    last = len(per_frame) - 1
    for pair, (rel, t0) in open_runs.items():
        spans.append((pair[0], pair[1], rel, t0, last))
    spans.sort(key=lambda s: (s[3], s[0], s[1], s[2]))
    return spans
