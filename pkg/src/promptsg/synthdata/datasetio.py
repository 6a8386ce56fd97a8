"""Clip persistence: interchange JSON documents plus raw-frame blobs."""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from ..core import interchange as ic
from ..core.masks import MaskTube, rle_decode
from ..core.types import SceneGraphOutput
from ..errors import ContractError, FormatError
from .generator import AnnotatedClip, EntityTrack, GroundTruthInteraction, SceneConfig, generate_clip


def clip_to_document(
    clip: AnnotatedClip,
    frames_file: str | None = None,
    inline_frames: bool = False,
    outputs: tuple[SceneGraphOutput, ...] = (),
) -> dict:
    doc: dict = {
        "format": ic.FORMAT_NAME,
        "version": ic.FORMAT_VERSION,
        "frames": clip.num_frames,
        "height": clip.height,
        "width": clip.width,
        "vocabulary": ic.vocabulary_to_json(clip.vocabulary),
        "entities": [
            {"class_index": e.class_index, "tube": ic.tube_to_json(e.tube)} for e in clip.entities
        ],
        "ground_truth": [
            {
                "subject_entity": gt.subject_entity,
                "object_entity": gt.object_entity,
                **ic.tracklet_to_json(gt.tracklet),
            }
            for gt in clip.ground_truth
        ],
        "outputs": [ic.output_to_json(o) for o in outputs],
    }
    if inline_frames:
        doc["frames_data"] = base64.b64encode(ic.write_frames_blob(clip.frames)).decode("ascii")
    elif frames_file is not None:
        doc["frames_file"] = frames_file
    return doc


def validate_clip(clip: AnnotatedClip) -> None:
    """Enforce every AnnotatedClip invariant; raises FormatError on violation."""
    t_total, height, width = clip.num_frames, clip.height, clip.width
    if clip.frames.ndim != 4 or clip.frames.shape[3] < 1:
        raise FormatError(f"frames must be (T,H,W,C), got {clip.frames.shape}", field="frames")
    if not np.isfinite(clip.frames).all():
        raise FormatError("frames contain non-finite values", field="frames")

    for i, entity in enumerate(clip.entities):
        tube = entity.tube
        if (tube.t_start, tube.t_end) != (0, t_total - 1):
            raise FormatError(
                f"entity tube spans [{tube.t_start},{tube.t_end}], clip has {t_total} frames",
                field=f"entities[{i}].tube",
            )
        if (tube.height, tube.width) != (height, width):
            raise FormatError("entity mask size differs from frame size", field=f"entities[{i}].tube")
        if not 0 <= entity.class_index < clip.vocabulary.null_object_index:
            raise FormatError(
                f"class_index {entity.class_index} is null or out of range",
                field=f"entities[{i}].class_index",
            )

    for t in range(t_total):
        acc = np.zeros((height, width), dtype=np.uint8)
        for entity in clip.entities:
            acc += rle_decode(entity.tube.mask_at(t))
        if (acc > 1).any():
            raise FormatError(f"entity masks overlap on frame {t}", field=f"entities@frame{t}")

    for k, gt in enumerate(clip.ground_truth):
        path = f"ground_truth[{k}]"
        for role, idx in (("subject", gt.subject_entity), ("object", gt.object_entity)):
            if not 0 <= idx < len(clip.entities):
                raise FormatError(f"{role}_entity {idx} does not exist", field=path)
        tl = gt.tracklet
        if tl.t_end >= t_total:
            raise FormatError(
                f"window [{tl.t_start},{tl.t_end}] exceeds clip length {t_total}", field=path
            )
        tl.validate_against(clip.vocabulary)
        if tl.subject_class != clip.entities[gt.subject_entity].class_index:
            raise FormatError("subject_class disagrees with subject entity", field=path)
        if tl.object_class != clip.entities[gt.object_entity].class_index:
            raise FormatError("object_class disagrees with object entity", field=path)
        for role, tube, entity_idx in (
            ("subject_tube", tl.subject_tube, gt.subject_entity),
            ("object_tube", tl.object_tube, gt.object_entity),
        ):
            source = clip.entities[entity_idx].tube
            for t in range(tube.t_start, tube.t_end + 1):
                if tube.mask_at(t).runs != source.mask_at(t).runs:
                    raise FormatError(
                        f"{role} mask at frame {t} is not a slice of its entity tube",
                        field=f"{path}.{role}",
                    )


def clip_from_document(doc: dict, base_dir: Path | None = None) -> AnnotatedClip:
    if not isinstance(doc, dict):
        raise FormatError("clip document must be a JSON object")
    if doc.get("format") != ic.FORMAT_NAME:
        raise FormatError(f"unknown format {doc.get('format')!r}", field="format")
    if doc.get("version") != ic.FORMAT_VERSION:
        raise FormatError(f"unsupported version {doc.get('version')!r}", field="version")
    t_total = doc.get("frames")
    height, width = doc.get("height"), doc.get("width")
    for key, value in (("frames", t_total), ("height", height), ("width", width)):
        if not isinstance(value, int) or value < 1:
            raise FormatError(f"{key} must be a positive integer", field=key)
    vocab = ic.vocabulary_from_json(doc.get("vocabulary"), "vocabulary")

    if "frames_data" in doc:
        blob = base64.b64decode(doc["frames_data"])
    elif "frames_file" in doc:
        if base_dir is None:
            raise FormatError("frames_file given but no base directory", field="frames_file")
        blob_path = base_dir / doc["frames_file"]
        if not blob_path.exists():
            raise FormatError(f"frames blob {doc['frames_file']} missing", field="frames_file")
        blob = blob_path.read_bytes()
    else:
        raise FormatError("clip document has neither frames_data nor frames_file", field="frames")
    frames = ic.read_frames_blob(blob)
    if frames.shape[:3] != (t_total, height, width):
        raise FormatError(
            f"frame blob shape {frames.shape} disagrees with header "
            f"({t_total},{height},{width})",
            field="frames",
        )

    entities = []
    for i, raw in enumerate(doc.get("entities", [])):
        path = f"entities[{i}]"
        if not isinstance(raw, dict):
            raise FormatError("entity must be an object", field=path)
        if "class_index" not in raw or "tube" not in raw:
            raise FormatError("entity needs class_index and tube", field=path)
        entities.append(
            EntityTrack(
                class_index=int(raw["class_index"]),
                tube=ic.tube_from_json(raw["tube"], f"{path}.tube"),
            )
        )

    ground_truth = []
    for k, raw in enumerate(doc.get("ground_truth", [])):
        path = f"ground_truth[{k}]"
        if not isinstance(raw, dict):
            raise FormatError("ground-truth record must be an object", field=path)
        if "subject_entity" not in raw or "object_entity" not in raw:
            raise FormatError("record needs subject_entity and object_entity", field=path)
        ground_truth.append(
            GroundTruthInteraction(
                subject_entity=int(raw["subject_entity"]),
                object_entity=int(raw["object_entity"]),
                tracklet=ic.tracklet_from_json(raw, path),
            )
        )

    clip = AnnotatedClip(
        frames=frames,
        vocabulary=vocab,
        entities=tuple(entities),
        ground_truth=tuple(ground_truth),
    )
    validate_clip(clip)
    return clip


def save_clip(clip: AnnotatedClip, json_path: Path, inline_frames: bool = False) -> None:
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    if inline_frames:
        doc = clip_to_document(clip, inline_frames=True)
    else:
        blob_name = json_path.stem + ".frames.bin"
        doc = clip_to_document(clip, frames_file=blob_name)
        (json_path.parent / blob_name).write_bytes(ic.write_frames_blob(clip.frames))
    json_path.write_text(json.dumps(doc))


def load_external_clip(path: Path) -> AnnotatedClip:
    """Load and fully validate a clip document from disk."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    return clip_from_document(doc, base_dir=path.parent)


def generate_dataset(
    config: SceneConfig,
    count: int,
    split_ratio: float,
    out_dir: Path,
) -> tuple[Path, Path]:
    """Write ``count`` clips split into train/ and eval/ under out_dir."""
    if count < 2:
        raise ContractError(f"count must be >= 2, got {count}")
    if not 0.0 < split_ratio < 1.0:
        raise ContractError(f"split_ratio must be in (0, 1), got {split_ratio}")
    out_dir = Path(out_dir)
    train_dir, eval_dir = out_dir / "train", out_dir / "eval"

    seed_rng = np.random.default_rng(config.seed)
    clip_seeds = seed_rng.integers(0, 2**63 - 1, size=count)
    n_train = min(max(int(round(count * split_ratio)), 1), count - 1)

    names = {"train": [], "eval": []}
    for i, clip_seed in enumerate(clip_seeds):
        clip = generate_clip(replace(config, seed=int(clip_seed)))
        split = "train" if i < n_train else "eval"
        name = f"clip_{i:05d}.json"
        save_clip(clip, (train_dir if split == "train" else eval_dir) / name)
        names[split].append(name)

    manifest = {
        "config": asdict(config),
        "count": count,
        "split_ratio": split_ratio,
        "train": names["train"],
        "eval": names["eval"],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return train_dir, eval_dir


def load_split(split_dir: Path) -> list[AnnotatedClip]:
    """All clips in one split directory, ordered by filename."""
    split_dir = Path(split_dir)
    paths = sorted(split_dir.glob("clip_*.json"))
    if not paths:
        raise FormatError(f"no clips found under {split_dir}")
    return [load_external_clip(p) for p in paths]
