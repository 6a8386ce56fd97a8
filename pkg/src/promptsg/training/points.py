"""Supervision-point sampling from ground-truth masks."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..core.masks import BinaryMask, rle_decode
from ..errors import ContractError


def distance_weights(mask: BinaryMask) -> np.ndarray:
    """Exact Euclidean distance to background per foreground pixel.

    The image border counts as background, so a mask touching the edge still
    gets finite distances.
    """
    dense = rle_decode(mask)
    padded = np.pad(dense, 1)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return dist * (dense > 0)


def sample_gt_point(mask: BinaryMask, rng: np.random.Generator) -> tuple[float, float]:
    """Draw an interior point with probability proportional to its boundary distance.

    Returns the normalized center of the sampled pixel, which therefore always
    satisfies point_in_mask against the source mask.
    """
    if mask.area == 0:
        raise ContractError("cannot sample a point from an empty mask")
    weights = distance_weights(mask)
    probs = weights.ravel() / weights.sum()
    index = int(rng.choice(probs.size, p=probs))
    row, col = divmod(index, mask.width)
    return ((col + 0.5) / mask.width, (row + 0.5) / mask.height)


def sample_uniform_point(mask: BinaryMask, rng: np.random.Generator) -> tuple[float, float]:
    """Uniform draw over foreground pixels (evaluation-protocol prompts)."""
    if mask.area == 0:
        raise ContractError("cannot sample a point from an empty mask")
    dense = rle_decode(mask)
    rows, cols = np.nonzero(dense)
    pick = int(rng.integers(0, rows.size))
    return ((cols[pick] + 0.5) / mask.width, (rows[pick] + 0.5) / mask.height)


def tight_box(mask: BinaryMask) -> tuple[float, float, float, float]:
    """Normalized tight bounding box of a non-empty mask."""
    if mask.area == 0:
        raise ContractError("cannot box an empty mask")
    dense = rle_decode(mask)
    rows, cols = np.nonzero(dense)
    return (
        float(cols.min() / mask.width),
        float(rows.min() / mask.height),
        float((cols.max() + 1) / mask.width),
        float((rows.max() + 1) / mask.height),
    )
