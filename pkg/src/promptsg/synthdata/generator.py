"""Deterministic synthetic interaction-video generator.

Entities are discs and axis-aligned boxes whose color and shape are tied to
their class. They move on smooth reflective trajectories; later entities
occlude earlier ones, so per-frame visible masks are disjoint by
construction. Relation labels are recomputed from those visible masks with
the rules in :mod:`.relations`, which makes the emitted ground truth exactly
reproducible by the standalone oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..core.masks import BinaryMask, MaskTube, rle_encode
from ..core.types import InteractionTracklet, Vocabulary
from ..errors import ContractError, GenerationError
from .relations import RELATION_NAMES, RelationParams, derive_frame_relations, derive_interaction_spans

# color name -> RGB in [0, 1]; class k uses palette[k] and alternates disc/box
PALETTE: tuple[tuple[str, tuple[float, float, float]], ...] = (
    ("red", (0.90, 0.15, 0.15)),
    ("green", (0.15, 0.80, 0.20)),
    ("blue", (0.20, 0.35, 0.90)),
    ("yellow", (0.90, 0.85, 0.20)),
    ("magenta", (0.85, 0.20, 0.85)),
    ("cyan", (0.20, 0.85, 0.85)),
    ("orange", (0.95, 0.55, 0.10)),
    ("teal", (0.10, 0.55, 0.50)),
)

BACKGROUND = 0.08
CHANNELS = 3


@dataclass(frozen=True)
class SceneConfig:
    """Everything that determines one synthetic clip."""

    seed: int
    frames: int = 8
    height: int = 64
    width: int = 64
    num_entities: int = 3
    object_class_count: int = 5  # vocabulary size including the null class
    predicate_class_count: int = 4
    max_interactions_per_subject: int = 2
    noise_sigma: float = 0.02
    near_threshold: float = 0.36  # proximity radius as a fraction of min(h, w)
    min_relation_run: int = 3  # scenes with shorter-lived relations are resampled
    min_visible_area: int = 6
    max_scene_retries: int = 60
    max_placement_tries: int = 200

    def __post_init__(self):
        if self.frames < 1:
            raise ContractError(f"frames must be >= 1, got {self.frames}")
        if not 2 <= self.num_entities <= 5:
            raise ContractError(f"num_entities must be in [2, 5], got {self.num_entities}")
        if self.object_class_count < 2 or self.object_class_count > len(PALETTE) + 1:
            raise ContractError(
                f"object_class_count must be in [2, {len(PALETTE) + 1}], got {self.object_class_count}"
            )
        if self.predicate_class_count < 2 or self.predicate_class_count > len(RELATION_NAMES) + 1:
            raise ContractError(
                f"predicate_class_count must be in [2, {len(RELATION_NAMES) + 1}],"
                f" got {self.predicate_class_count}"
            )
        if not 1 <= self.max_interactions_per_subject <= self.num_entities - 1:
            raise ContractError(
                f"max_interactions_per_subject must be in [1, {self.num_entities - 1}]"
            )
        if min(self.height, self.width) < 24:
            raise ContractError("frame size below 24px cannot fit entities")

    @property
    def relation_params(self) -> RelationParams:
        return RelationParams(near_dist_px=self.near_threshold * min(self.height, self.width))

    @property
    def num_real_objects(self) -> int:
        return self.object_class_count - 1

    @property
    def num_real_predicates(self) -> int:
        return self.predicate_class_count - 1


def build_vocabulary(object_class_count: int, predicate_class_count: int) -> Vocabulary:
    """The class lists used by generated clips; null classes are last."""
    objects = []
    for k in range(object_class_count - 1):
        color, _ = PALETTE[k]
        shape = "disc" if k % 2 == 0 else "box"
        objects.append(f"{color}_{shape}")
    predicates = list(RELATION_NAMES[: predicate_class_count - 1])
    return Vocabulary(tuple(objects + ["none"]), tuple(predicates + ["none"]))


@dataclass(frozen=True)
class EntityTrack:
    """One scene entity: its class and full-clip visible-mask tube."""

    class_index: int
    tube: MaskTube


@dataclass(frozen=True)
class GroundTruthInteraction:
    """A labelled tracklet plus the entity indices it is grounded in."""

    subject_entity: int
    object_entity: int
    tracklet: InteractionTracklet


@dataclass(frozen=True)
class AnnotatedClip:
    frames: np.ndarray = field(repr=False)  # (T, H, W, 3) float32
    vocabulary: Vocabulary
    entities: tuple[EntityTrack, ...]
    ground_truth: tuple[GroundTruthInteraction, ...]

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def height(self) -> int:
        return int(self.frames.shape[1])

    @property
    def width(self) -> int:
        return int(self.frames.shape[2])

    def subjects(self) -> tuple[int, ...]:
        """Entity indices that act as subject of at least one interaction."""
        return tuple(sorted({gt.subject_entity for gt in self.ground_truth}))

    def interactions_of(self, subject_entity: int) -> tuple[GroundTruthInteraction, ...]:
        return tuple(gt for gt in self.ground_truth if gt.subject_entity == subject_entity)

    def active_interactions(self, subject_entity: int, t: int) -> tuple[GroundTruthInteraction, ...]:
        return tuple(
            gt
            for gt in self.ground_truth
            if gt.subject_entity == subject_entity and gt.tracklet.t_start <= t <= gt.tracklet.t_end
        )


@dataclass
class _Entity:
    class_index: int
    shape: str  # "disc" | "box"
    size: tuple[float, float]  # disc: (r, r); box: (half_h, half_w)
    centers: np.ndarray  # (T, 2) float rows/cols


def _shape_mask(entity: _Entity, t: int, height: int, width: int) -> np.ndarray:
    cy, cx = entity.centers[t]
    yy, xx = np.mgrid[0:height, 0:width]
    if entity.shape == "disc":
        r = entity.size[0]
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    hh, hw = entity.size
    return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)


def _bounding_radius(entity: _Entity) -> float:
    if entity.shape == "disc":
        return entity.size[0]
    return float(np.hypot(*entity.size))


def _simulate(rng: np.random.Generator, config: SceneConfig) -> list[_Entity] | None:
    """One trajectory sample; None when initial placement fails."""
    h, w, t_total = config.height, config.width, config.frames
    entities: list[_Entity] = []
    for _ in range(config.num_entities):
        class_index = int(rng.integers(0, config.num_real_objects))
        shape = "disc" if class_index % 2 == 0 else "box"
        if shape == "disc":
            r = float(rng.uniform(4.5, 8.0))
            size = (r, r)
        else:
            size = (float(rng.uniform(4.0, 7.0)), float(rng.uniform(4.0, 7.0)))
        entities.append(_Entity(class_index, shape, size, np.zeros((t_total, 2))))

    placed: list[np.ndarray] = []
    for entity in entities:
        radius = _bounding_radius(entity)
        lo_y, hi_y = radius + 1.0, h - radius - 2.0
        lo_x, hi_x = radius + 1.0, w - radius - 2.0
        if lo_y >= hi_y or lo_x >= hi_x:
            return None
        for _ in range(config.max_placement_tries):
            candidate = np.array([rng.uniform(lo_y, hi_y), rng.uniform(lo_x, hi_x)])
            ok = all(
                np.hypot(*(candidate - other)) > radius + _bounding_radius(entities[k]) + 2.0
                for k, other in enumerate(placed)
            )
            if ok:
                placed.append(candidate)
                break
        else:
            return None

    for entity, start in zip(entities, placed):
        speed = rng.uniform(0.4, 2.2)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        velocity = np.array([speed * np.sin(angle), speed * np.cos(angle)])
        radius = _bounding_radius(entity)
        lo = np.array([radius + 1.0, radius + 1.0])
        hi = np.array([h - radius - 2.0, w - radius - 2.0])
        pos = start.copy()
        for t in range(t_total):
            entity.centers[t] = pos
            pos = pos + velocity
            for axis in range(2):
                if pos[axis] < lo[axis]:
                    pos[axis] = 2 * lo[axis] - pos[axis]
                    velocity[axis] = -velocity[axis]
                elif pos[axis] > hi[axis]:
                    pos[axis] = 2 * hi[axis] - pos[axis]
                    velocity[axis] = -velocity[axis]
    return entities


def _visible_masks(entities: list[_Entity], t: int, config: SceneConfig) -> list[np.ndarray]:
    """Painter-order masks: a later entity occludes everything below it."""
    own = [_shape_mask(e, t, config.height, config.width) for e in entities]
    visible = []
    for i in range(len(entities)):
        mask = own[i].copy()
        for j in range(i + 1, len(entities)):
            mask &= ~own[j]
        visible.append(mask)
    return visible


def _scene_feasible(
    visible: list[list[np.ndarray]],
    spans: list[tuple[int, int, int, int, int]],
    per_frame: list[dict[tuple[int, int], int]],
    config: SceneConfig,
) -> bool:
    for frame_masks in visible:
        for mask in frame_masks:
            if int(mask.sum()) < config.min_visible_area:
                return False
    for relations in per_frame:
        counts: dict[int, int] = {}
        for (subj, _obj) in relations:
            counts[subj] = counts.get(subj, 0) + 1
            if counts[subj] > config.max_interactions_per_subject:
                return False
    if not spans:
        return False
    for (_s, _o, _r, t0, t1) in spans:
        if t1 - t0 + 1 < min(config.min_relation_run, config.frames):
            return False
    return True


def generate_clip(config: SceneConfig) -> AnnotatedClip:
    """Deterministically realize one annotated clip for the config's seed."""
    rng = np.random.default_rng(config.seed)
    vocab = build_vocabulary(config.object_class_count, config.predicate_class_count)
    params = config.relation_params

    for _attempt in range(config.max_scene_retries):
        entities = _simulate(rng, config)
        if entities is None:
            continue
        visible = [_visible_masks(entities, t, config) for t in range(config.frames)]
        per_frame = [
            derive_frame_relations(frame_masks, params, config.num_real_predicates)
            for frame_masks in visible
        ]
        spans = derive_interaction_spans(per_frame)
        if not _scene_feasible(visible, spans, per_frame, config):
            continue

        frames = np.full(
            (config.frames, config.height, config.width, CHANNELS), BACKGROUND, dtype=np.float32
        )
        for t in range(config.frames):
            for entity, mask in zip(entities, visible[t]):
                color = np.asarray(PALETTE[entity.class_index][1], dtype=np.float32)
                frames[t][mask] = color
        if config.noise_sigma > 0:
            frames += rng.normal(0.0, config.noise_sigma, size=frames.shape).astype(np.float32)
            frames = np.clip(frames, 0.0, 1.0)

        tracks = tuple(
            EntityTrack(
                class_index=entity.class_index,
                tube=MaskTube(
                    0,
                    config.frames - 1,
                    tuple(rle_encode(visible[t][i]) for t in range(config.frames)),
                ),
            )
            for i, entity in enumerate(entities)
        )
        ground_truth = tuple(
            _span_to_interaction(span, tracks, vocab) for span in spans
        )
        return AnnotatedClip(
            frames=frames, vocabulary=vocab, entities=tracks, ground_truth=ground_truth
        )

    raise GenerationError(
        f"no feasible scene after {config.max_scene_retries} retries for seed {config.seed}"
    )


def _span_to_interaction(
    span: tuple[int, int, int, int, int],
    tracks: tuple[EntityTrack, ...],
    vocab: Vocabulary,
) -> GroundTruthInteraction:
    subj, obj, rel, t0, t1 = span
    subject_tube = MaskTube(t0, t1, tracks[subj].tube.masks[t0 : t1 + 1])
    object_tube = MaskTube(t0, t1, tracks[obj].tube.masks[t0 : t1 + 1])
    tracklet = InteractionTracklet(
        subject_class=tracks[subj].class_index,
        object_class=tracks[obj].class_index,
        predicate_class=rel,
        subject_tube=subject_tube,
        object_tube=object_tube,
        confidence=1.0,
    )
    tracklet.validate_against(vocab)
    return GroundTruthInteraction(subj, obj, tracklet)


def derive_ground_truth(clip: AnnotatedClip, config: SceneConfig) -> tuple[GroundTruthInteraction, ...]:
    """Recompute interaction labels from the clip's emitted masks alone.

    This is the independent oracle: it never looks at ``clip.ground_truth``.
    """
    dense = [
        [mask.to_dense().astype(bool) for mask in (e.tube.mask_at(t) for e in clip.entities)]
        for t in range(clip.num_frames)
    ]
    per_frame = [
        derive_frame_relations(frame_masks, config.relation_params, config.num_real_predicates)
        for frame_masks in dense
    ]
    spans = derive_interaction_spans(per_frame)
    return tuple(_span_to_interaction(span, clip.entities, clip.vocabulary) for span in spans)


def perturbed(config: SceneConfig, seed: int) -> SceneConfig:
    """The same scene family under a different seed."""
    return replace(config, seed=seed)
