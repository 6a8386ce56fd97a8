from .masks import BinaryMask, MaskTube, mask_iou, point_in_mask, rle_decode, rle_encode, tube_iou
from .types import (
    PROMPT_KINDS,
    InteractionTracklet,
    SceneGraphOutput,
    VisualPrompt,
    Vocabulary,
)

__all__ = [
    "BinaryMask",
    "MaskTube",
    "InteractionTracklet",
    "SceneGraphOutput",
    "VisualPrompt",
    "Vocabulary",
    "PROMPT_KINDS",
    "mask_iou",
    "tube_iou",
    "point_in_mask",
    "rle_encode",
    "rle_decode",
]
