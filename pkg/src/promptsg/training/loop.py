"""Optimization loop, schedules, checkpoints, and the train config format.

Config files are plain ``key = value`` lines (``#`` comments allowed). Keys
name TrainConfig fields, loss weights (``bce``, ``dice``, ``iou``, ``l2``,
``sub``, ``obj``, ``rel``, ``null_class_weight``), or model fields with a
``model.`` prefix (e.g. ``model.channels = 48``).
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ContractError, FormatError, NumericalError
from ..model import InteractionModel, ModelConfig, build_model, save_checkpoint
from ..synthdata.generator import AnnotatedClip
from .episode import episode_forward, plan_episode
from .losses import LossWeights, StepPredictions, total_loss

PROMPT_KINDS = ("point", "box", "mask")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    clip_length: int = 8
    batch_size: int = 4
    lr_semantics: float = 5e-4  # constant
    lr_discovery_start: float = 5e-5  # cosine-annealed down to lr_discovery_end
    lr_discovery_end: float = 1e-5
    lr_backbone: float = 1e-3
    freeze_backbone: bool = False
    weight_decay: float = 1e-4
    clip_grad_norm: float = 10.0  # 0 disables clipping
    prompt_point_prob: float = 0.49
    prompt_box_prob: float = 0.49
    prompt_mask_prob: float = 0.02
    seed: int = 0
    discovery_frames_per_clip: int = 3
    checkpoint_every: int = 500  # steps
    log_every: int = 10
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be >= 1")
        for name in ("lr_semantics", "lr_discovery_start", "lr_discovery_end", "lr_backbone"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be > 0")
        total = self.prompt_point_prob + self.prompt_box_prob + self.prompt_mask_prob
        if abs(total - 1.0) > 1e-9:
            raise ContractError(f"prompt-kind probabilities sum to {total}, expected 1")

    @property
    def prompt_probs(self) -> tuple[float, float, float]:
        return (self.prompt_point_prob, self.prompt_box_prob, self.prompt_mask_prob)


def cosine_lr(start: float, end: float, step: int, total_steps: int) -> float:
    if total_steps <= 1:
        return end
    progress = min(max(step / (total_steps - 1), 0.0), 1.0)
    return end + 0.5 * (start - end) * (1.0 + math.cos(math.pi * progress))


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path | None
    steps: int
    final_loss: float
    diverged: bool
    elapsed_seconds: float


def train(
    clips: list[AnnotatedClip],
    config: TrainConfig,
    model_config: ModelConfig,
    out_path: Path,
    log_path: Path | None = None,
) -> TrainResult:
    """Optimize a fresh model on the given clips; returns the checkpoint path."""
    if not clips:
        raise ContractError("training set is empty")
    vocab = clips[0].vocabulary
    for clip in clips:
        if clip.vocabulary != vocab:
            raise ContractError("clips carry inconsistent vocabularies")
    model_config = dataclasses.replace(
        model_config,
        num_object_classes=vocab.num_object_classes,
        num_predicate_classes=vocab.num_predicate_classes,
    )
    trainable = [clip for clip in clips if clip.subjects()]
    if not trainable:
        raise ContractError("no clip has an interacting subject to train on")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_model(model_config)
    model.train()

    groups = model.parameter_groups()
    param_groups = [
        {"params": groups["semantics"], "lr": config.lr_semantics, "name": "semantics"},
        {"params": groups["discovery"], "lr": config.lr_discovery_start, "name": "discovery"},
    ]
    if config.freeze_backbone:
        for p in groups["backbone"]:
            p.requires_grad_(False)
    else:
        param_groups.append({"params": groups["backbone"], "lr": config.lr_backbone, "name": "backbone"})
    optimizer = torch.optim.AdamW(param_groups, weight_decay=config.weight_decay)

    steps_per_epoch = math.ceil(len(trainable) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    out_path = Path(out_path)
    log_file = open(log_path, "w") if log_path else None

    def checkpoint(extra: dict) -> None:
        save_checkpoint(out_path, model, vocab, extra)

    step = 0
    last_loss = float("nan")
    diverged = False
    started = time.time()
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(len(trainable))
            for start in range(0, len(trainable), config.batch_size):
                lr_discovery = cosine_lr(
                    config.lr_discovery_start, config.lr_discovery_end, step, total_steps
                )
                for group in optimizer.param_groups:
                    if group["name"] == "discovery":
                        group["lr"] = lr_discovery

                try:
                    batch = StepPredictions()
                    for clip_index in order[start : start + config.batch_size]:
                        clip = trainable[clip_index]
                        subjects = clip.subjects()
                        subject = int(subjects[rng.integers(0, len(subjects))])
                        kind = PROMPT_KINDS[
                            int(rng.choice(len(PROMPT_KINDS), p=config.prompt_probs))
                        ]
                        plan = plan_episode(
                            clip, subject, kind, rng, config.discovery_frames_per_clip
                        )
                        episode_preds, _ = episode_forward(model, clip, plan, config.weights)
                        batch.merge(episode_preds)
                    loss, breakdown = total_loss(batch, config.weights)
                except NumericalError:
                    diverged = True
                    break
                optimizer.zero_grad()
                loss.backward()
                if config.clip_grad_norm > 0:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_grad_norm)
                optimizer.step()
                last_loss = float(loss.detach())

                if log_file and (step % config.log_every == 0 or step == total_steps - 1):
                    record = {
                        "step": step,
                        "epoch": epoch,
                        "loss": last_loss,
                        "terms": {k: float(v.detach()) for k, v in breakdown.items()},
                        "lr_discovery": lr_discovery,
                    }
                    log_file.write(json.dumps(record) + "\n")
                    log_file.flush()
                step += 1
                if config.checkpoint_every and step % config.checkpoint_every == 0:
                    checkpoint({"step": step, "loss": last_loss})
            if diverged:
                break
    finally:
        if log_file:
            log_file.close()

    if not diverged:
        checkpoint({"step": step, "loss": last_loss, "completed": True})
    elif not out_path.exists():
        # diverged before the first periodic checkpoint: keep the last good state
        checkpoint({"step": step, "loss": last_loss, "diverged": True})
    return TrainResult(
        checkpoint_path=out_path,
        log_path=Path(log_path) if log_path else None,
        steps=step,
        final_loss=last_loss,
        diverged=diverged,
        elapsed_seconds=time.time() - started,
    )


def parse_train_config(text: str) -> tuple[TrainConfig, dict]:
    """Parse the key=value config format; returns (TrainConfig, model overrides)."""
    train_fields = {f.name: f.type for f in dataclasses.fields(TrainConfig) if f.name != "weights"}
    weight_fields = {f.name for f in dataclasses.fields(LossWeights)}
    model_fields = {f.name for f in dataclasses.fields(ModelConfig)}

    train_kwargs: dict = {}
    weight_kwargs: dict = {}
    model_kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("model."):
            name = key[len("model.") :]
            if name not in model_fields:
                raise FormatError(f"line {lineno}: unknown model key {name!r}")
            model_kwargs[name] = int(value)
        elif key in weight_fields:
            weight_kwargs[key] = float(value)
        elif key in train_fields:
            if key in ("epochs", "clip_length", "batch_size", "seed",
                       "discovery_frames_per_clip", "checkpoint_every", "log_every"):
                train_kwargs[key] = int(value)
            elif key == "freeze_backbone":
                train_kwargs[key] = value.lower() in ("1", "true", "yes")
            else:
                train_kwargs[key] = float(value)
        else:
            raise FormatError(f"line {lineno}: unknown key {key!r}")
    if weight_kwargs:
        train_kwargs["weights"] = LossWeights(**weight_kwargs)
    return TrainConfig(**train_kwargs), model_kwargs
