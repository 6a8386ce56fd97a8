from .generator import (
    AnnotatedClip,
    EntityTrack,
    GroundTruthInteraction,
    SceneConfig,
    build_vocabulary,
    derive_ground_truth,
    generate_clip,
)
from .datasetio import (
    clip_from_document,
    clip_to_document,
    generate_dataset,
    load_external_clip,
    load_split,
    save_clip,
    validate_clip,
)
from .relations import RELATION_NAMES, RelationParams, derive_frame_relations, derive_interaction_spans

__all__ = [
    "AnnotatedClip",
    "EntityTrack",
    "GroundTruthInteraction",
    "SceneConfig",
    "RelationParams",
    "RELATION_NAMES",
    "build_vocabulary",
    "generate_clip",
    "derive_ground_truth",
    "derive_frame_relations",
    "derive_interaction_spans",
    "generate_dataset",
    "load_external_clip",
    "load_split",
    "save_clip",
    "validate_clip",
    "clip_to_document",
    "clip_from_document",
]
