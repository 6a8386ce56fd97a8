"""The repeated-runs evaluation protocol and its report formats.

Point prompts are re-sampled uniformly from the subject's ground-truth mask
on every run and box prompts are re-jittered, so those rows carry a spread;
mask prompts are the ground-truth mask itself, deterministic, and run once.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..core.masks import BinaryMask
from ..core.types import VisualPrompt
from ..discovery import heatmap_discover
from ..errors import ContractError
from ..model import InteractionModel
from ..pipeline import Discoverer, PipelineConfig, RunResult, run
from ..synthdata.generator import AnnotatedClip
from ..training.points import sample_uniform_point, tight_box
from .recall import point_recall, recall_at_k, spatial_recall

METRIC_NAMES = ("recall_at_k", "spatial_recall", "point_recall")


@dataclass(frozen=True)
class EvalConfig:
    k: int = 3
    tau: float = 0.5
    runs: int = 25
    iou_mode: str = "tube"  # "tube" | "frame_avg"
    seed: int = 0
    prompt_kind: str = "point"  # "point" | "box" | "mask"
    box_jitter: float = 0.05

    def __post_init__(self):
        if self.k < 1 or self.runs < 1:
            raise ContractError("k and runs must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ContractError(f"tau must be in (0, 1], got {self.tau}")
        if self.iou_mode not in ("tube", "frame_avg"):
            raise ContractError(f"unknown iou_mode {self.iou_mode!r}")
        if self.prompt_kind not in ("point", "box", "mask"):
            raise ContractError(f"unknown prompt kind {self.prompt_kind!r}")


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float

    def render(self, deterministic: bool) -> str:
        if deterministic:
            return f"{self.mean:.3f}"
        return f"{self.mean:.3f} ±{self.std:.3f}"


@dataclass
class EvalReport:
    recall_at_k: MetricSummary
    spatial_recall: MetricSummary
    point_recall: MetricSummary
    runs_executed: int
    per_clip: list[dict]
    config: EvalConfig

    @property
    def deterministic(self) -> bool:
        return self.runs_executed == 1

    def to_json(self) -> dict:
        return {
            "config": dataclasses.asdict(self.config),
            "runs_executed": self.runs_executed,
            "metrics": {
                name: {"mean": getattr(self, name).mean, "std": getattr(self, name).std}
                for name in METRIC_NAMES
            },
            "per_clip": self.per_clip,
        }

    def render_table(self) -> str:
        return render_report_table([self])


def render_report_table(reports: list["EvalReport"]) -> str:
    header = f"{'prompt':<8}{'runs':<6}{'R@K':<16}{'SpatialR':<16}{'PointR':<16}"
    lines = [header, "-" * len(header)]
    for report in reports:
        lines.append(
            f"{report.config.prompt_kind:<8}"
            f"{report.runs_executed:<6}"
            f"{report.recall_at_k.render(report.deterministic):<16}"
            f"{report.spatial_recall.render(report.deterministic):<16}"
            f"{report.point_recall.render(report.deterministic):<16}"
        )
    return "\n".join(lines)


def subject_prompt_frame(clip: AnnotatedClip, subject_entity: int) -> int:
    """First frame of the subject's earliest interaction window."""
    interactions = clip.interactions_of(subject_entity)
    if not interactions:
        raise ContractError(f"entity {subject_entity} has no interactions")
    return min(gt.tracklet.t_start for gt in interactions)


def build_eval_prompt(
    clip: AnnotatedClip,
    subject_entity: int,
    prompt_kind: str,
    rng: np.random.Generator,
    box_jitter: float,
) -> VisualPrompt:
    frame = subject_prompt_frame(clip, subject_entity)
    mask = clip.entities[subject_entity].tube.mask_at(frame)
    if prompt_kind == "point":
        return VisualPrompt(kind="point", frame=frame, point=sample_uniform_point(mask, rng))
    if prompt_kind == "mask":
        return VisualPrompt(kind="mask", frame=frame, mask=mask)
    x0, y0, x1, y1 = tight_box(mask)
    if box_jitter > 0:
        span_x, span_y = x1 - x0, y1 - y0
        offsets = rng.uniform(-box_jitter, box_jitter, size=4)
        x0 = min(max(x0 + offsets[0] * span_x, 0.0), 1.0)
        y0 = min(max(y0 + offsets[1] * span_y, 0.0), 1.0)
        x1 = min(max(x1 + offsets[2] * span_x, 0.0), 1.0)
        y1 = min(max(y1 + offsets[3] * span_y, 0.0), 1.0)
        if not (x0 < x1 and y0 < y1):
            x0, y0, x1, y1 = tight_box(mask)
    return VisualPrompt(kind="box", frame=frame, box=(x0, y0, x1, y1))


def evaluate_episode(
    result: RunResult,
    clip: AnnotatedClip,
    subject_entity: int,
    config: EvalConfig,
) -> dict[str, float]:
    """All three metrics for one prompt episode."""
    gts = [gt.tracklet for gt in clip.interactions_of(subject_entity)]
    predictions = list(result.scene_graph.tracklets)
    frame_gt_masks: dict[int, list[BinaryMask]] = {}
    for t in range(clip.num_frames):
        masks = [
            clip.entities[gt.object_entity].tube.mask_at(t)
            for gt in clip.interactions_of(subject_entity)
            if gt.tracklet.t_start <= t <= gt.tracklet.t_end
        ]
        if masks:
            frame_gt_masks[t] = masks
    frame_points = {t: found.points for t, found in result.discoveries.items()}
    return {
        "recall_at_k": recall_at_k(predictions, gts, config.k, config.tau, config.iou_mode),
        "spatial_recall": spatial_recall(predictions, gts, config.tau, config.iou_mode),
        "point_recall": point_recall(frame_points, frame_gt_masks),
    }


def make_heatmap_discoverer(
    heatmap: np.ndarray, num_points: int, rng: np.random.Generator, token_dim: int
) -> Discoverer:
    def discover(_frame, _grid, _subject_mask):
        return heatmap_discover(heatmap, num_points, rng, token_dim)

    return discover


def robustness_protocol(
    model: InteractionModel,
    clips: list[AnnotatedClip],
    config: EvalConfig,
    pipeline_config: PipelineConfig | None = None,
    discoverer_factory: Callable[[np.random.Generator], Discoverer] | None = None,
) -> EvalReport:
    """Repeat the full evaluation with freshly sampled prompts per run.

    Sampled prompt kinds (point, box) execute ``config.runs`` times; the
    deterministic mask prompt executes once. Metrics aggregate as the mean
    over (clip, subject) episodes within a run, then mean ± std across runs.
    """
    if not clips:
        raise ContractError("evaluation set is empty")
    pipeline_config = pipeline_config or PipelineConfig()
    episodes = [
        (clip_index, subject)
        for clip_index, clip in enumerate(clips)
        for subject in clip.subjects()
    ]
    if not episodes:
        raise ContractError("no clip carries an interacting subject")

    runs_executed = 1 if config.prompt_kind == "mask" else config.runs
    run_means: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
    clip_sums: dict[int, dict[str, float]] = {}
    clip_counts: dict[int, int] = {}

    for run_index in range(runs_executed):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, run_index)))
        discoverer = discoverer_factory(rng) if discoverer_factory else None
        episode_values: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
        for clip_index, subject in episodes:
            clip = clips[clip_index]
            prompt = build_eval_prompt(clip, subject, config.prompt_kind, rng, config.box_jitter)
            result = run(model, clip.frames, prompt, pipeline_config, discoverer)
            metrics = evaluate_episode(result, clip, subject, config)
            for name in METRIC_NAMES:
                episode_values[name].append(metrics[name])
            bucket = clip_sums.setdefault(clip_index, {name: 0.0 for name in METRIC_NAMES})
            for name in METRIC_NAMES:
                bucket[name] += metrics[name]
            clip_counts[clip_index] = clip_counts.get(clip_index, 0) + 1
        for name in METRIC_NAMES:
            run_means[name].append(float(np.mean(episode_values[name])))

    summaries = {
        name: MetricSummary(
            mean=float(np.mean(run_means[name])), std=float(np.std(run_means[name]))
        )
        for name in METRIC_NAMES
    }
    per_clip = [
        {
            "clip": clip_index,
            **{name: clip_sums[clip_index][name] / clip_counts[clip_index] for name in METRIC_NAMES},
        }
        for clip_index in sorted(clip_sums)
    ]
    return EvalReport(
        recall_at_k=summaries["recall_at_k"],
        spatial_recall=summaries["spatial_recall"],
        point_recall=summaries["point_recall"],
        runs_executed=runs_executed,
        per_clip=per_clip,
        config=config,
    )


def save_report(report: EvalReport, path: Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2))
