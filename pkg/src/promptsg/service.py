"""Session-oriented HTTP facade over the inference pipeline.

Sessions bind one clip to accumulated per-prompt scene graphs. Within a
session requests serialize through a busy flag (a second prompt while one
is running gets 409); distinct sessions are independent. Expired or deleted
session ids answer 410 to distinguish them from ids that never existed.
"""

from __future__ import annotations

import io
import threading
import time
import uuid
from dataclasses import dataclass, field, replace

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from .core import interchange as ic
from .core.masks import rle_decode
from .core.types import SceneGraphOutput, Vocabulary
from .errors import FormatError, GenerationError
from .model import InteractionModel
from .pipeline import PipelineConfig, run
from .synthdata.datasetio import clip_from_document
from .synthdata.generator import AnnotatedClip, SceneConfig, generate_clip

SYNTHETIC_FIELDS = ("seed", "frames", "height", "width", "num_entities", "noise_sigma")


@dataclass
class ServiceConfig:
    max_sessions: int = 64
    idle_timeout_seconds: float = 3600.0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)


@dataclass
class Session:
    session_id: str
    clip: AnnotatedClip
    outputs: list[SceneGraphOutput] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    last_used_at: float = field(default_factory=time.time)
    busy: threading.Lock = field(default_factory=threading.Lock)

    def touch(self) -> None:
        self.last_used_at = time.time()

    def info(self) -> dict:
        return {
            "session_id": self.session_id,
            "frames": self.clip.num_frames,
            "height": self.clip.height,
            "width": self.clip.width,
            "vocabulary": ic.vocabulary_to_json(self.clip.vocabulary),
            "prompt_count": len(self.outputs),
            "busy": self.busy.locked(),
            "created_at": self.created_at,
            "last_used_at": self.last_used_at,
        }


class _ApiError(Exception):
    def __init__(self, status: int, detail: str, fieldpath: str | None = None):
        self.status = status
        self.detail = detail
        self.fieldpath = fieldpath
        super().__init__(detail)


class SessionRegistry:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self._sessions: dict[str, Session] = {}
        self._gone: set[str] = set()
        self._lock = threading.Lock()

    def _expire_locked(self) -> None:
        deadline = time.time() - self.config.idle_timeout_seconds
        for sid in [s for s, sess in self._sessions.items() if sess.last_used_at < deadline]:
            del self._sessions[sid]
            self._gone.add(sid)

    def create(self, clip: AnnotatedClip) -> Session:
        with self._lock:
            self._expire_locked()
            if len(self._sessions) >= self.config.max_sessions:
                raise _ApiError(429, f"session capacity {self.config.max_sessions} exceeded")
            session = Session(session_id=uuid.uuid4().hex, clip=clip)
            self._sessions[session.session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._expire_locked()
            if session_id in self._sessions:
                session = self._sessions[session_id]
                session.touch()
                return session
        if session_id in self._gone:
            raise _ApiError(410, f"session {session_id} is gone")
        raise _ApiError(404, f"unknown session {session_id}")

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id in self._sessions:
                del self._sessions[session_id]
                self._gone.add(session_id)
                return
        if session_id in self._gone:
            raise _ApiError(410, f"session {session_id} is gone")
        raise _ApiError(404, f"unknown session {session_id}")


def _synthetic_clip(scene: dict, vocabulary: Vocabulary) -> AnnotatedClip:
    unknown = set(scene) - set(SYNTHETIC_FIELDS)
    if unknown:
        raise _ApiError(422, f"unknown synthetic fields {sorted(unknown)}", "scene")
    try:
        config = SceneConfig(
            seed=int(scene.get("seed", 0)),
            object_class_count=vocabulary.num_object_classes,
            predicate_class_count=vocabulary.num_predicate_classes,
        )
        config = replace(
            config,
            **{k: int(v) if k != "noise_sigma" else float(v) for k, v in scene.items() if k != "seed"},
        )
        return generate_clip(config)
    except (ValueError, GenerationError) as exc:
        raise _ApiError(422, str(exc), "scene") from exc


def create_app(
    model: InteractionModel,
    vocabulary: Vocabulary,
    config: ServiceConfig | None = None,
) -> FastAPI:
    config = config or ServiceConfig()
    registry = SessionRegistry(config)
    app = FastAPI(title="promptsg", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.registry = registry
    model.eval()

    @app.exception_handler(_ApiError)
    async def handle_api_error(_request: Request, exc: _ApiError):
        body = {"detail": exc.detail}
        if exc.fieldpath:
            body["field"] = exc.fieldpath
        return JSONResponse(status_code=exc.status, content=body)

    @app.post("/sessions", status_code=201)
    async def create_session(payload: dict):
        source = payload.get("source")
        if source == "synthetic":
            clip = _synthetic_clip(payload.get("scene", {}), vocabulary)
        elif source == "upload":
            try:
                clip = clip_from_document(payload.get("clip"), base_dir=None)
            except FormatError as exc:
                raise _ApiError(422, str(exc), exc.field) from exc
        else:
            raise _ApiError(422, f"source must be 'synthetic' or 'upload', got {source!r}", "source")
        if clip.vocabulary != vocabulary:
            raise _ApiError(422, "clip vocabulary disagrees with the checkpoint", "vocabulary")
        session = registry.create(clip)
        return session.info()

    @app.get("/sessions/{session_id}")
    async def session_info(session_id: str):
        return registry.get(session_id).info()

    @app.delete("/sessions/{session_id}", status_code=204)
    async def delete_session(session_id: str):
        registry.delete(session_id)
        return Response(status_code=204)

    @app.post("/sessions/{session_id}/prompts")
    async def submit_prompt(session_id: str, payload: dict):
        session = registry.get(session_id)
        try:
            prompt = ic.prompt_from_json(payload, "prompt")
        except FormatError as exc:
            raise _ApiError(422, str(exc), exc.field) from exc
        if not 0 <= prompt.frame < session.clip.num_frames:
            raise _ApiError(422, f"frame {prompt.frame} outside clip", "prompt.frame")
        if not session.busy.acquire(blocking=False):
            raise _ApiError(409, "a prompt is already running on this session")
        try:
            result = run(model, session.clip.frames, prompt, config.pipeline)
            session.outputs.append(result.scene_graph)
            session.touch()
            return ic.output_to_json(result.scene_graph)
        finally:
            session.busy.release()

    @app.get("/sessions/{session_id}/graph")
    async def get_graph(session_id: str):
        session = registry.get(session_id)
        return {"outputs": [ic.output_to_json(o) for o in session.outputs]}

    @app.get("/sessions/{session_id}/frames/{frame_index}")
    async def get_frame(session_id: str, frame_index: int):
        session = registry.get(session_id)
        clip = session.clip
        if not 0 <= frame_index < clip.num_frames:
            raise _ApiError(422, f"frame {frame_index} outside clip", "frame")
        rgb = np.clip(clip.frames[frame_index] * 255.0, 0, 255).astype(np.uint8)
        buffer = io.BytesIO()
        Image.fromarray(rgb, mode="RGB").save(buffer, format="PNG")
        return Response(content=buffer.getvalue(), media_type="image/png")

    @app.get("/sessions/{session_id}/frames/{frame_index}/overlays")
    async def get_overlays(session_id: str, frame_index: int):
        session = registry.get(session_id)
        clip = session.clip
        if not 0 <= frame_index < clip.num_frames:
            raise _ApiError(422, f"frame {frame_index} outside clip", "frame")
        overlays = []
        for prompt_index, output in enumerate(session.outputs):
            active = [
                (i, t)
                for i, t in enumerate(output.tracklets)
                if t.t_start <= frame_index <= t.t_end
            ]
            if not active:
                continue
            subject_mask = active[0][1].subject_tube.mask_at(frame_index)
            overlays.append(
                {
                    "prompt_index": prompt_index,
                    "tracklet_id": f"{prompt_index}:subject",
                    "role": "subject",
                    "class_name": vocabulary.object_classes[active[0][1].subject_class],
                    "predicate_name": None,
                    "confidence": max(t.confidence for _, t in active),
                    "height": subject_mask.height,
                    "width": subject_mask.width,
                    "runs": ic.mask_to_json(subject_mask),
                    "area": subject_mask.area,
                }
            )
            for i, tracklet in active:
                mask = tracklet.object_tube.mask_at(frame_index)
                overlays.append(
                    {
                        "prompt_index": prompt_index,
                        "tracklet_id": f"{prompt_index}:{i}",
                        "role": "object",
                        "class_name": vocabulary.object_classes[tracklet.object_class],
                        "predicate_name": vocabulary.predicate_classes[tracklet.predicate_class],
                        "confidence": tracklet.confidence,
                        "height": mask.height,
                        "width": mask.width,
                        "runs": ic.mask_to_json(mask),
                        "area": mask.area,
                    }
                )
        return {"frame": frame_index, "overlays": overlays}

    return app
