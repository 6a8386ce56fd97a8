"""JSON codecs for the clip interchange format plus the raw-frame blob.

A clip document is a single JSON object:

    {
      "format": "scene-graph-clip", "version": 1,
      "frames": 8, "height": 64, "width": 64,
      "vocabulary": {"object_classes": [...], "predicate_classes": [...]},
      "frames_file": "clip_00000.frames.bin",      # or "frames_data": base64
      "entities": [{"class_index": 0, "tube": {...}}, ...],
      "ground_truth": [{"subject_entity": 0, "object_entity": 1, ...}, ...],
      "outputs": [{"subject_prompt": {...}, "subject_found": true,
                   "tracklets": [...]}, ...]
    }

Tubes inline their masks as RLE run arrays:

    {"t_start": 0, "t_end": 7, "height": 64, "width": 64,
     "masks": [[4096], [12, 5, ...], ...]}

The raw-frame blob is the 28-byte header ``magic "PSGFRAME" | u32 version |
u32 frames | u32 height | u32 width | u32 channels`` (little-endian) followed
by float32 pixel data in frame-row-column-channel order.
"""

from __future__ import annotations

import struct
from typing import Any

import numpy as np

from ..errors import FormatError
from .masks import BinaryMask, MaskTube
from .types import InteractionTracklet, SceneGraphOutput, VisualPrompt, Vocabulary

FORMAT_NAME = "scene-graph-clip"
FORMAT_VERSION = 1
BLOB_MAGIC = b"PSGFRAME"
BLOB_VERSION = 1


def _require(doc: dict, key: str, path: str) -> Any:
    if key not in doc:
        raise FormatError("missing key", field=f"{path}.{key}" if path else key)
    return doc[key]


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"expected integer, got {value!r}", field=path)
    return value


def mask_to_json(mask: BinaryMask) -> list[int]:
    return list(mask.runs)


def mask_from_json(runs: Any, height: int, width: int, path: str) -> BinaryMask:
    if not isinstance(runs, list) or not all(isinstance(r, int) and not isinstance(r, bool) for r in runs):
        raise FormatError("mask runs must be a list of integers", field=path)
    try:
        return BinaryMask(height, width, tuple(runs))
    except FormatError as exc:
        raise FormatError(str(exc), field=path) from exc


def tube_to_json(tube: MaskTube) -> dict:
    return {
        "t_start": tube.t_start,
        "t_end": tube.t_end,
        "height": tube.height,
        "width": tube.width,
        "masks": [mask_to_json(m) for m in tube.masks],
    }


def tube_from_json(doc: Any, path: str) -> MaskTube:
    if not isinstance(doc, dict):
        raise FormatError("tube must be an object", field=path)
    height = _as_int(_require(doc, "height", path), f"{path}.height")
    width = _as_int(_require(doc, "width", path), f"{path}.width")
    masks_json = _require(doc, "masks", path)
    if not isinstance(masks_json, list):
        raise FormatError("masks must be a list", field=f"{path}.masks")
    masks = tuple(
        mask_from_json(m, height, width, f"{path}.masks[{i}]") for i, m in enumerate(masks_json)
    )
    try:
        return MaskTube(
            _as_int(_require(doc, "t_start", path), f"{path}.t_start"),
            _as_int(_require(doc, "t_end", path), f"{path}.t_end"),
            masks,
        )
    except FormatError as exc:
        raise FormatError(str(exc), field=path) from exc


def prompt_to_json(prompt: VisualPrompt) -> dict:
    doc: dict[str, Any] = {"kind": prompt.kind, "frame": prompt.frame}
    if prompt.point is not None:
        doc["point"] = list(prompt.point)
    if prompt.box is not None:
        doc["box"] = list(prompt.box)
    if prompt.mask is not None:
        doc["mask"] = {
            "height": prompt.mask.height,
            "width": prompt.mask.width,
            "runs": mask_to_json(prompt.mask),
        }
    return doc


def prompt_from_json(doc: Any, path: str) -> VisualPrompt:
    if not isinstance(doc, dict):
        raise FormatError("prompt must be an object", field=path)
    kind = _require(doc, "kind", path)
    frame = _as_int(_require(doc, "frame", path), f"{path}.frame")
    point = box = mask = None
    if "point" in doc:
        raw = doc["point"]
        if not (isinstance(raw, list) and len(raw) == 2):
            raise FormatError("point must be [x, y]", field=f"{path}.point")
        point = (float(raw[0]), float(raw[1]))
    if "box" in doc:
        raw = doc["box"]
        if not (isinstance(raw, list) and len(raw) == 4):
            raise FormatError("box must be [x0, y0, x1, y1]", field=f"{path}.box")
        box = tuple(float(v) for v in raw)
    if "mask" in doc:
        raw = doc["mask"]
        if not isinstance(raw, dict):
            raise FormatError("mask must be an object", field=f"{path}.mask")
        mask = mask_from_json(
            _require(raw, "runs", f"{path}.mask"),
            _as_int(_require(raw, "height", f"{path}.mask"), f"{path}.mask.height"),
            _as_int(_require(raw, "width", f"{path}.mask"), f"{path}.mask.width"),
            f"{path}.mask",
        )
    try:
        return VisualPrompt(kind=kind, frame=frame, point=point, box=box, mask=mask)
    except FormatError as exc:
        raise FormatError(str(exc), field=path) from exc


def tracklet_to_json(tracklet: InteractionTracklet) -> dict:
    return {
        "subject_class": tracklet.subject_class,
        "object_class": tracklet.object_class,
        "predicate_class": tracklet.predicate_class,
        "confidence": tracklet.confidence,
        "subject_tube": tube_to_json(tracklet.subject_tube),
        "object_tube": tube_to_json(tracklet.object_tube),
    }


def tracklet_from_json(doc: Any, path: str) -> InteractionTracklet:
    if not isinstance(doc, dict):
        raise FormatError("tracklet must be an object", field=path)
    try:
        return InteractionTracklet(
            subject_class=_as_int(_require(doc, "subject_class", path), f"{path}.subject_class"),
            object_class=_as_int(_require(doc, "object_class", path), f"{path}.object_class"),
            predicate_class=_as_int(
                _require(doc, "predicate_class", path), f"{path}.predicate_class"
            ),
            subject_tube=tube_from_json(_require(doc, "subject_tube", path), f"{path}.subject_tube"),
            object_tube=tube_from_json(_require(doc, "object_tube", path), f"{path}.object_tube"),
            confidence=float(_require(doc, "confidence", path)),
        )
    except FormatError as exc:
        if exc.field:
            raise
        raise FormatError(str(exc), field=path) from exc


def output_to_json(output: SceneGraphOutput) -> dict:
    return {
        "subject_prompt": prompt_to_json(output.subject_prompt),
        "subject_found": output.subject_found,
        "tracklets": [tracklet_to_json(t) for t in output.tracklets],
    }


def output_from_json(doc: Any, path: str) -> SceneGraphOutput:
    if not isinstance(doc, dict):
        raise FormatError("output must be an object", field=path)
    tracklets_json = _require(doc, "tracklets", path)
    if not isinstance(tracklets_json, list):
        raise FormatError("tracklets must be a list", field=f"{path}.tracklets")
    tracklets = tuple(
        tracklet_from_json(t, f"{path}.tracklets[{i}]") for i, t in enumerate(tracklets_json)
    )
    try:
        return SceneGraphOutput(
            subject_prompt=prompt_from_json(_require(doc, "subject_prompt", path), f"{path}.subject_prompt"),
            tracklets=tracklets,
            subject_found=bool(doc.get("subject_found", True)),
        )
    except FormatError as exc:
        if exc.field:
            raise
        raise FormatError(str(exc), field=path) from exc


def vocabulary_to_json(vocab: Vocabulary) -> dict:
    return {
        "object_classes": list(vocab.object_classes),
        "predicate_classes": list(vocab.predicate_classes),
    }


def vocabulary_from_json(doc: Any, path: str = "vocabulary") -> Vocabulary:
    if not isinstance(doc, dict):
        raise FormatError("vocabulary must be an object", field=path)
    objects = _require(doc, "object_classes", path)
    predicates = _require(doc, "predicate_classes", path)
    if not (isinstance(objects, list) and all(isinstance(c, str) for c in objects)):
        raise FormatError("object_classes must be a list of strings", field=f"{path}.object_classes")
    if not (isinstance(predicates, list) and all(isinstance(c, str) for c in predicates)):
        raise FormatError(
            "predicate_classes must be a list of strings", field=f"{path}.predicate_classes"
        )
    try:
        return Vocabulary(tuple(objects), tuple(predicates))
    except FormatError as exc:
        raise FormatError(str(exc), field=path) from exc


def write_frames_blob(frames: np.ndarray) -> bytes:
    """Serialize a (frames, height, width, channels) float array."""
    if frames.ndim != 4:
        raise FormatError(f"expected 4-D frame array, got shape {frames.shape}")
    data = np.ascontiguousarray(frames, dtype=np.float32)
    header = BLOB_MAGIC + struct.pack("<IIIII", BLOB_VERSION, *data.shape)
    return header + data.tobytes()


def read_frames_blob(blob: bytes) -> np.ndarray:
    header_size = len(BLOB_MAGIC) + 5 * 4
    if len(blob) < header_size or blob[: len(BLOB_MAGIC)] != BLOB_MAGIC:
        raise FormatError("not a raw-frame blob (bad magic)")
    version, frames, height, width, channels = struct.unpack(
        "<IIIII", blob[len(BLOB_MAGIC) : header_size]
    )
    if version != BLOB_VERSION:
        raise FormatError(f"unsupported blob version {version}")
    expected = frames * height * width * channels * 4
    payload = blob[header_size:]
    if len(payload) != expected:
        raise FormatError(f"blob payload holds {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(frames, height, width, channels).copy()
