import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from promptsg.model import ModelConfig, build_model
from promptsg.synthdata import SceneConfig, generate_clip


@pytest.fixture(scope="session")
def small_clip():
    return generate_clip(SceneConfig(seed=3))


@pytest.fixture(scope="session")
def untrained_model():
    return build_model(ModelConfig(), seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_tiny_model_config() -> ModelConfig:
    return ModelConfig(
        channels=8,
        heads=2,
        backbone_layers=1,
        discovery_layers=1,
        num_queries=2,
        fourier_bands=2,
        num_object_classes=4,
        num_predicate_classes=3,
    )


def make_tiny_clip_config(seed: int = 11) -> SceneConfig:
    return SceneConfig(
        seed=seed,
        frames=3,
        height=24,
        width=24,
        num_entities=2,
        object_class_count=4,
        predicate_class_count=3,
        max_interactions_per_subject=1,
        min_relation_run=1,
    )
