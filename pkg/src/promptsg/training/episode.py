"""One training episode: a (clip, subject, prompt) forward pass.

The pass is split into a *plan* (every random draw: prompt frame, prompt
content, supervised frames, ground-truth target points) and a *forward*
(pure function of the plan and the model parameters). Freezing a plan plus
its query matching makes the forward smooth and repeatable, which is what
the finite-difference gradient oracle differentiates.

Teacher forcing keeps supervision clean: subject propagation re-prompts with
the ground-truth mask of the neighboring frame, matched object losses pool
over ground-truth masks and segment from sampled ground-truth points, while
unmatched queries are pushed toward the null classes through their own
(predicted-point) path with a soft mask pooling so the loss surface stays
differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from ..backbone import FeatureGrid
from ..core.masks import BinaryMask, rle_decode
from ..core.types import VisualPrompt
from ..errors import ContractError
from ..model import InteractionModel
from ..synthdata.generator import AnnotatedClip
from .losses import LossWeights, StepPredictions
from .matching import MatchResult, build_cost_matrix, hungarian_match
from .points import sample_gt_point, tight_box


@dataclass(frozen=True)
class EpisodePlan:
    subject_entity: int
    prompt: VisualPrompt
    discovery_frames: tuple[int, ...]
    propagation_sources: dict[int, int] = field(default_factory=dict)
    # (dy, dx, morph) noise applied to each propagation prompt mask, morph in
    # {-1 erode, 0 none, +1 dilate}; inference re-prompts with imperfect
    # predicted masks, so training sees imperfect prompts too
    propagation_jitter: dict[int, tuple[int, int, int]] = field(default_factory=dict)
    point_targets: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    background_points: dict[int, tuple[float, float]] = field(default_factory=dict)


def plan_episode(
    clip: AnnotatedClip,
    subject_entity: int,
    prompt_kind: str,
    rng: np.random.Generator,
    discovery_frames_per_clip: int = 3,
) -> EpisodePlan:
    """Fix every random choice of one episode up front."""
    tube = clip.entities[subject_entity].tube
    visible = [t for t in range(clip.num_frames) if tube.mask_at(t).area > 0]
    if not visible:
        raise ContractError(f"subject entity {subject_entity} is never visible")
    t_prompt = int(rng.choice(visible))
    prompt_mask = tube.mask_at(t_prompt)
    if prompt_kind == "point":
        prompt = VisualPrompt(
            kind="point", frame=t_prompt, point=sample_gt_point(prompt_mask, rng)
        )
    elif prompt_kind == "box":
        prompt = VisualPrompt(kind="box", frame=t_prompt, box=tight_box(prompt_mask))
    elif prompt_kind == "mask":
        prompt = VisualPrompt(kind="mask", frame=t_prompt, mask=prompt_mask)
    else:
        raise ContractError(f"unknown prompt kind {prompt_kind!r}")

    others = [t for t in visible if t != t_prompt]
    extra = min(max(discovery_frames_per_clip - 1, 0), len(others))
    chosen = sorted(rng.choice(others, size=extra, replace=False).tolist()) if extra else []
    discovery_frames = tuple(sorted([t_prompt] + chosen))
    propagation_sources = {
        t: (t - 1 if t > t_prompt else t + 1) for t in discovery_frames if t != t_prompt
    }
    propagation_jitter = {
        t: (
            int(rng.integers(-2, 3)),
            int(rng.integers(-2, 3)),
            int(rng.integers(-1, 2)),
        )
        for t in propagation_sources
    }

    point_targets: dict[tuple[int, int], tuple[float, float]] = {}
    background_points: dict[int, tuple[float, float]] = {}
    for t in discovery_frames:
        for g, interaction in enumerate(clip.active_interactions(subject_entity, t)):
            object_mask = clip.entities[interaction.object_entity].tube.mask_at(t)
            point_targets[(t, g)] = sample_gt_point(object_mask, rng)
        # a prompt on empty background teaches "no object here"; keep a clear
        # margin from every entity so the signal is unambiguous at cell scale
        occupied = np.zeros((clip.height, clip.width), dtype=bool)
        for entity in clip.entities:
            occupied |= rle_decode(entity.tube.mask_at(t)).astype(bool)
        margin = ndimage.distance_transform_edt(~occupied) > 5.0
        rows, cols = np.nonzero(margin)
        if rows.size:
            pick = int(rng.integers(0, rows.size))
            background_points[t] = (
                (cols[pick] + 0.5) / clip.width,
                (rows[pick] + 0.5) / clip.height,
            )
    return EpisodePlan(
        subject_entity=subject_entity,
        prompt=prompt,
        discovery_frames=discovery_frames,
        propagation_sources=propagation_sources,
        propagation_jitter=propagation_jitter,
        point_targets=point_targets,
        background_points=background_points,
    )


def _jitter_mask(dense: np.ndarray, jitter: tuple[int, int, int]) -> np.ndarray:
    dy, dx, morph = jitter
    noisy = np.roll(dense, (dy, dx), axis=(0, 1))
    if dy > 0:
        noisy[:dy] = 0
    elif dy < 0:
        noisy[dy:] = 0
    if dx > 0:
        noisy[:, :dx] = 0
    elif dx < 0:
        noisy[:, dx:] = 0
    if morph > 0:
        noisy = ndimage.binary_dilation(noisy > 0.5).astype(dense.dtype)
    elif morph < 0:
        noisy = ndimage.binary_erosion(noisy > 0.5).astype(dense.dtype)
    return noisy


def _soft_pool(grid: FeatureGrid, mask_logits: torch.Tensor, stride: int) -> torch.Tensor:
    """Feature mean weighted by predicted foreground probability (smooth)."""
    weights = F.avg_pool2d(torch.sigmoid(mask_logits)[None, None], stride)[0, 0]
    weighted = (grid.values * weights[..., None]).sum(dim=(0, 1))
    return weighted / (weights.sum() + 1e-6)


def episode_forward(
    model: InteractionModel,
    clip: AnnotatedClip,
    plan: EpisodePlan,
    weights: LossWeights,
    frozen_matches: dict[int, MatchResult] | None = None,
) -> tuple[StepPredictions, dict[int, MatchResult]]:
    """Build the supervised quantities for one episode.

    Matching is recomputed from the current parameters unless
    ``frozen_matches`` pins it (gradients never flow through the matcher
    either way).
    """
    dtype = next(model.parameters()).dtype
    num_queries = model.config.num_queries
    null_object = model.config.num_object_classes - 1
    null_predicate = model.config.num_predicate_classes - 1
    stride = 4

    frames = torch.from_numpy(np.ascontiguousarray(clip.frames)).to(dtype).permute(0, 3, 1, 2)
    encoded = model.backbone.encoder(frames)
    grids = {t: FeatureGrid(values=encoded[t].permute(1, 2, 0)) for t in range(clip.num_frames)}

    tube = clip.entities[plan.subject_entity].tube
    subject_dense = {
        t: torch.from_numpy(rle_decode(tube.mask_at(t)).astype(np.float32)).to(dtype)
        for t in range(clip.num_frames)
    }
    subject_class = clip.entities[plan.subject_entity].class_index

    preds = StepPredictions()
    matches_out: dict[int, MatchResult] = {}
    subject_tokens: dict[int, torch.Tensor] = {}

    t_p = plan.prompt.frame
    for t in plan.discovery_frames:
        grid = grids[t]
        preds.subject_terms.append(
            (model.semantics.classify_entity(grid, subject_dense[t], "subject"), subject_class)
        )

        didm_token, _ = model.discovery.build_subject_token(grid, subject_dense[t])
        points, _query_feats = model.discovery.discover_tokens(grid, didm_token)
        detached_points = points.detach()

        interactions = clip.active_interactions(plan.subject_entity, t)
        if len(interactions) > num_queries:
            raise ContractError(
                f"{len(interactions)} active interactions exceed {num_queries} queries"
            )
        gt_points = [plan.point_targets[(t, g)] for g in range(len(interactions))]

        # every decoder pass at frame t rides in one batched call:
        # row 0 = subject (prompt or propagation), rows 1..N_q = predicted
        # query points, then ground-truth object points, then the optional
        # background point
        if t == t_p:
            subject_token_in, subject_prior = model.backbone.embed_prompt(plan.prompt, grid)
        else:
            source = plan.propagation_sources[t]
            source_mask = rle_decode(tube.mask_at(source)).astype(np.float32)
            source_mask = _jitter_mask(source_mask, plan.propagation_jitter[t])
            subject_token_in, subject_prior = model.backbone.embed_mask_prompt(
                torch.from_numpy(source_mask).to(dtype), grid
            )
        query_tokens, query_priors = model.backbone.embed_points(detached_points, grid)
        rows = [subject_token_in, *query_tokens]
        priors = [subject_prior, *query_priors]
        if gt_points:
            gt_tokens, gt_priors = model.backbone.embed_points(
                torch.tensor(gt_points, dtype=dtype), grid
            )
            rows.extend(gt_tokens)
            priors.extend(gt_priors)
        background = plan.background_points.get(t)
        if background is not None:
            bg_tokens, bg_priors = model.backbone.embed_points(
                torch.tensor([background], dtype=dtype), grid
            )
            rows.append(bg_tokens[0])
            priors.append(bg_priors[0])
        logits_b, tokens_b, confs_b = model.backbone.segment_with_token(
            torch.stack(rows), torch.stack(priors), grid
        )

        preds.mask_pairs.append((logits_b[0], subject_dense[t], confs_b[0]))
        subject_tokens[t] = tokens_b[0]
        if background is not None:
            empty = torch.zeros_like(subject_dense[t])
            preds.mask_pairs.append((logits_b[-1], empty, confs_b[-1]))

        # inference-path logits per query: drive the matching cost and the
        # null supervision of unmatched queries
        object_logits_q, predicate_logits_q = [], []
        for j in range(num_queries):
            pooled = _soft_pool(grid, logits_b[1 + j], stride)
            object_logits_q.append(model.semantics.classify_pooled(pooled, "object"))
            predicate_logits_q.append(
                model.semantics.classify_predicate(subject_tokens[t], tokens_b[1 + j])
            )

        if frozen_matches is not None:
            match = frozen_matches[t]
        else:
            cost = build_cost_matrix(
                gt_points=gt_points,
                gt_object_classes=[gt.tracklet.object_class for gt in interactions],
                gt_predicate_classes=[gt.tracklet.predicate_class for gt in interactions],
                pred_points=detached_points.numpy(),
                object_logits=[l.detach().numpy() for l in object_logits_q],
                predicate_logits=[l.detach().numpy() for l in predicate_logits_q],
                weights=weights,
            )
            match = hungarian_match(cost)
        matches_out[t] = match

        for g, j in match.assignment.items():
            interaction = interactions[g]
            preds.point_pairs.append(
                (points[j], torch.tensor(plan.point_targets[(t, g)], dtype=dtype))
            )
            object_mask = clip.entities[interaction.object_entity].tube.mask_at(t)
            object_dense = torch.from_numpy(rle_decode(object_mask).astype(np.float32)).to(dtype)
            row = 1 + num_queries + g  # teacher-forced pass from the sampled GT point
            preds.mask_pairs.append((logits_b[row], object_dense, confs_b[row]))

            class_logits = model.semantics.classify_entity(grid, object_dense, "object")
            preds.object_terms.append((class_logits, interaction.tracklet.object_class, False))
            rel_logits = model.semantics.classify_predicate(subject_tokens[t], tokens_b[row])
            preds.predicate_terms.append((rel_logits, interaction.tracklet.predicate_class, False))

        for j in sorted(match.unmatched_queries):
            preds.object_terms.append((object_logits_q[j], null_object, True))
            preds.predicate_terms.append((predicate_logits_q[j], null_predicate, True))

    return preds, matches_out
