"""End-to-end inference: prompt -> subject tube -> discovery -> tracklets.

One run owns one backbone session. The subject is segmented at the prompt
frame and propagated to every other frame; at each discovery frame the
discovery module proposes object points which the backbone segments; object
detections are linked over time greedily by mask IoU; per-track logits are
frame-averaged and assembled into ranked interaction tracklets sharing the
subject's mask sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from .backbone import BackboneSession, FeatureGrid
from .core.masks import BinaryMask, MaskTube, mask_iou
from .core.types import InteractionTracklet, SceneGraphOutput, VisualPrompt
from .discovery import DiscoveryOutput
from .errors import ContractError
from .model import InteractionModel
from .semantics import TripletPrediction, score_triplet

Discoverer = Callable[[int, FeatureGrid, BinaryMask], DiscoveryOutput]


@dataclass(frozen=True)
class PipelineConfig:
    discovery_cadence: int = 1
    link_iou_threshold: float = 0.5
    min_track_length: int = 1
    activity_confidence_floor: float = 0.0

    def __post_init__(self):
        if self.discovery_cadence < 1:
            raise ContractError("discovery_cadence must be >= 1")
        for name in ("link_iou_threshold", "activity_confidence_floor"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractError(f"{name} must be in [0,1], got {value}")


@dataclass
class _Detection:
    frame: int
    mask: BinaryMask
    object_logits: np.ndarray
    predicate_logits: np.ndarray


@dataclass
class TrackDiagnostic:
    """One linked object track and how it was scored."""

    t_start: int
    t_end: int
    triplet: TripletPrediction
    num_detections: int


@dataclass
class RunResult:
    scene_graph: SceneGraphOutput
    subject_masks: dict[int, BinaryMask] = field(default_factory=dict)
    discoveries: dict[int, DiscoveryOutput] = field(default_factory=dict)
    tracks: list[TrackDiagnostic] = field(default_factory=list)


def _link_tracks(
    frame_detections: dict[int, list[_Detection]], threshold: float
) -> list[list[_Detection]]:
    """Greedy IoU association of per-frame detections into tracks."""
    tracks: list[list[_Detection]] = []
    for frame in sorted(frame_detections):
        detections = frame_detections[frame]
        candidates = []
        for d_idx, det in enumerate(detections):
            for t_idx, track in enumerate(tracks):
                iou = mask_iou(track[-1].mask, det.mask)
                if iou >= threshold:
                    candidates.append((iou, t_idx, d_idx))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        used_tracks: set[int] = set()
        used_dets: set[int] = set()
        for iou, t_idx, d_idx in candidates:
            if t_idx in used_tracks or d_idx in used_dets:
                continue
            tracks[t_idx].append(detections[d_idx])
            used_tracks.add(t_idx)
            used_dets.add(d_idx)
        for d_idx, det in enumerate(detections):
            if d_idx not in used_dets:
                tracks.append([det])
    return tracks


def run(
    model: InteractionModel,
    frames: np.ndarray,
    prompt: VisualPrompt,
    config: PipelineConfig = PipelineConfig(),
    discoverer: Discoverer | None = None,
) -> RunResult:
    """Produce the scene graph for one prompt on one clip."""
    num_frames, height, width = frames.shape[0], frames.shape[1], frames.shape[2]
    if not 0 <= prompt.frame < num_frames:
        raise ContractError(f"prompt frame {prompt.frame} outside [0, {num_frames})")

    model.eval()
    session = BackboneSession(model.backbone, frames)
    t_p = prompt.frame

    subject_at_prompt = session.segment(t_p, prompt, track_as="subject")
    if (
        subject_at_prompt.mask.area == 0
        or subject_at_prompt.confidence < config.activity_confidence_floor
    ):
        return RunResult(
            scene_graph=SceneGraphOutput(subject_prompt=prompt, tracklets=(), subject_found=False)
        )

    subject_results = {t_p: subject_at_prompt}
    for t in range(t_p + 1, num_frames):
        subject_results[t] = session.propagate("subject", t)
    session.seed_entity("subject", t_p, subject_at_prompt.mask)
    for t in range(t_p - 1, -1, -1):
        subject_results[t] = session.propagate("subject", t)
    subject_masks = {t: r.mask for t, r in subject_results.items()}

    discovery_frames = [t for t in range(num_frames) if (t - t_p) % config.discovery_cadence == 0]
    discoveries: dict[int, DiscoveryOutput] = {}
    frame_detections: dict[int, list[_Detection]] = {}
    subject_logit_sum: np.ndarray | None = None
    subject_logit_count = 0

    with torch.no_grad():
        for t in range(num_frames):
            grid = session.encode_frame(t)
            subject_mask = subject_masks[t]
            if subject_mask.area == 0:
                continue
            logits = model.semantics.classify_entity(grid, subject_mask, "subject").numpy()
            subject_logit_sum = logits if subject_logit_sum is None else subject_logit_sum + logits
            subject_logit_count += 1
            if t not in discovery_frames:
                continue

            if discoverer is None:
                found = model.discovery.discover(grid, subject_mask)
            else:
                found = discoverer(t, grid, subject_mask)
            discoveries[t] = found

            detections: list[_Detection] = []
            subject_token = torch.from_numpy(subject_results[t].object_token)
            for obj_res in session.segment_points(t, found.points):
                if obj_res.mask.area == 0:
                    continue
                obj_logits = model.semantics.classify_entity(grid, obj_res.mask, "object").numpy()
                rel_logits = (
                    model.semantics.classify_predicate(
                        subject_token, torch.from_numpy(obj_res.object_token)
                    ).numpy()
                )
                detections.append(_Detection(t, obj_res.mask, obj_logits, rel_logits))
            if detections:
                frame_detections[t] = detections

    if subject_logit_sum is None:
        # subject vanished everywhere after the prompt frame; nothing to emit
        return RunResult(
            scene_graph=SceneGraphOutput(subject_prompt=prompt, tracklets=(), subject_found=False),
            subject_masks=subject_masks,
        )
    subject_logits = subject_logit_sum / subject_logit_count

    tracks = _link_tracks(frame_detections, config.link_iou_threshold)
    diagnostics: list[TrackDiagnostic] = []
    scored: list[tuple[TripletPrediction, int, int, list[BinaryMask]]] = []
    for track in tracks:
        t_start, t_end = track[0].frame, track[-1].frame
        obj_logits = np.mean([d.object_logits for d in track], axis=0)
        rel_logits = np.mean([d.predicate_logits for d in track], axis=0)
        triplet = score_triplet(subject_logits, obj_logits, rel_logits)
        diagnostics.append(TrackDiagnostic(t_start, t_end, triplet, len(track)))
        if t_end - t_start + 1 < config.min_track_length or not triplet.active:
            continue
        by_frame = {d.frame: d.mask for d in track}
        masks = [
            by_frame.get(t, BinaryMask.empty(height, width)) for t in range(t_start, t_end + 1)
        ]
        scored.append((triplet, t_start, t_end, masks))

    scored.sort(key=lambda item: -item[0].confidence)
    tracklets = tuple(
        InteractionTracklet(
            subject_class=triplet.subject_class,
            object_class=triplet.object_class,
            predicate_class=triplet.predicate_class,
            subject_tube=MaskTube(
                t_start, t_end, tuple(subject_masks[t] for t in range(t_start, t_end + 1))
            ),
            object_tube=MaskTube(t_start, t_end, tuple(masks)),
            confidence=triplet.confidence,
        )
        for triplet, t_start, t_end, masks in scored
    )
    return RunResult(
        scene_graph=SceneGraphOutput(subject_prompt=prompt, tracklets=tracklets),
        subject_masks=subject_masks,
        discoveries=discoveries,
        tracks=diagnostics,
    )
