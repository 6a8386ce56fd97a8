"""The full model bundle and its checkpoint container."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from .backbone import BackboneConfig, SegmentationBackbone
from .core.types import Vocabulary
from .discovery import DiscoveryConfig, InteractionDiscoverer
from .errors import FormatError
from .semantics import SemanticClassifier

CHECKPOINT_FORMAT = "promptsg-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 32
    heads: int = 4
    backbone_layers: int = 2
    discovery_layers: int = 2
    num_queries: int = 3
    fourier_bands: int = 4
    num_object_classes: int = 5  # including null
    num_predicate_classes: int = 4  # including null

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            channels=self.channels,
            heads=self.heads,
            decoder_layers=self.backbone_layers,
            fourier_bands=self.fourier_bands,
        )

    def discovery_config(self) -> DiscoveryConfig:
        return DiscoveryConfig(
            num_queries=self.num_queries,
            decoder_layers=self.discovery_layers,
            token_dim=self.channels,
            heads=self.heads,
        )


class InteractionModel(nn.Module):
    """Backbone, discovery module, and semantic heads under one state dict."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = SegmentationBackbone(config.backbone_config())
        self.discovery = InteractionDiscoverer(config.discovery_config())
        self.semantics = SemanticClassifier(
            config.channels, config.num_object_classes, config.num_predicate_classes
        )

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "backbone": list(self.backbone.parameters()),
            "discovery": list(self.discovery.parameters()),
            "semantics": list(self.semantics.parameters()),
        }


def build_model(config: ModelConfig, seed: int | None = None) -> InteractionModel:
    if seed is not None:
        torch.manual_seed(seed)
    return InteractionModel(config)


def save_checkpoint(path: Path, model: InteractionModel, vocabulary: Vocabulary, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "vocabulary": {
            "object_classes": list(vocabulary.object_classes),
            "predicate_classes": list(vocabulary.predicate_classes),
        },
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: Path) -> tuple[InteractionModel, Vocabulary, dict]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"checkpoint {path} does not exist")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {payload.get('version')!r}")
    config = ModelConfig(**payload["model_config"])
    model = InteractionModel(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    vocab_json = payload["vocabulary"]
    vocabulary = Vocabulary(
        tuple(vocab_json["object_classes"]), tuple(vocab_json["predicate_classes"])
    )
    return model, vocabulary, payload.get("extra", {})
