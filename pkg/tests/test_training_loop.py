import dataclasses
import json

import numpy as np
import pytest
import torch

from conftest import make_tiny_clip_config, make_tiny_model_config
from promptsg.errors import ContractError, FormatError
from promptsg.model import ModelConfig, load_checkpoint
from promptsg.synthdata import SceneConfig, generate_clip
from promptsg.training import (
    LossWeights,
    TrainConfig,
    cosine_lr,
    episode_forward,
    parse_train_config,
    plan_episode,
    total_loss,
    train,
)


def tiny_clips(count=6, base_seed=100):
    clips = []
    seed = base_seed
    while len(clips) < count:
        try:
            clips.append(generate_clip(make_tiny_clip_config(seed)))
        except Exception:
            pass
        seed += 1
    return clips


def smoke_train_config(**overrides):
    defaults = dict(
        epochs=12,
        batch_size=2,
        lr_semantics=1e-3,
        lr_discovery_start=1e-3,
        lr_discovery_end=5e-4,
        lr_backbone=1e-3,
        seed=5,
        discovery_frames_per_clip=2,
        checkpoint_every=0,
        log_every=1,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


class TestEpisode:
    def test_plan_is_deterministic_given_rng_state(self, small_clip):
        subject = small_clip.subjects()[0]
        plan_a = plan_episode(small_clip, subject, "point", np.random.default_rng(7))
        plan_b = plan_episode(small_clip, subject, "point", np.random.default_rng(7))
        assert plan_a == plan_b

    def test_forward_deterministic_and_match_freeze_stable(self, untrained_model, small_clip):
        subject = small_clip.subjects()[0]
        plan = plan_episode(small_clip, subject, "box", np.random.default_rng(3))
        weights = LossWeights()
        preds_a, matches = episode_forward(untrained_model, small_clip, plan, weights)
        loss_a, _ = total_loss(preds_a, weights)
        preds_b, _ = episode_forward(
            untrained_model, small_clip, plan, weights, frozen_matches=matches
        )
        loss_b, _ = total_loss(preds_b, weights)
        assert float(loss_a.detach()) == pytest.approx(float(loss_b.detach()), abs=1e-12)

    def test_mask_prompt_episode_runs(self, untrained_model, small_clip):
        subject = small_clip.subjects()[0]
        plan = plan_episode(small_clip, subject, "mask", np.random.default_rng(11))
        preds, _ = episode_forward(untrained_model, small_clip, plan, LossWeights())
        assert preds.mask_pairs and preds.subject_terms

    def test_unknown_prompt_kind_rejected(self, small_clip):
        with pytest.raises(ContractError):
            plan_episode(small_clip, small_clip.subjects()[0], "scribble", np.random.default_rng(0))


class TestTrain:
    def test_smoke_descent_and_checkpoint(self, tmp_path):
        clips = tiny_clips()
        log_path = tmp_path / "log.ndjson"
        result = train(
            clips, smoke_train_config(), make_tiny_model_config(), tmp_path / "ckpt.pt", log_path
        )
        assert not result.diverged
        assert result.checkpoint_path.exists()
        records = [json.loads(line) for line in log_path.read_text().splitlines()]
        early = np.mean([r["loss"] for r in records[:5]])
        late = np.mean([r["loss"] for r in records[-5:]])
        assert late < early

        model, vocab, extra = load_checkpoint(result.checkpoint_path)
        assert vocab == clips[0].vocabulary
        assert extra.get("completed") is True

    def test_same_seed_same_loss_sequence(self, tmp_path):
        clips = tiny_clips()
        log_a, log_b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        train(clips, smoke_train_config(), make_tiny_model_config(), tmp_path / "a.pt", log_a)
        train(clips, smoke_train_config(), make_tiny_model_config(), tmp_path / "b.pt", log_b)
        assert log_a.read_text() == log_b.read_text()

    def test_divergence_aborts_with_checkpoint(self, tmp_path):
        clips = tiny_clips(count=3)
        config = smoke_train_config(lr_semantics=1e9, lr_backbone=1e9, lr_discovery_start=1e9,
                                    lr_discovery_end=1e9, epochs=30)
        result = train(clips, config, make_tiny_model_config(), tmp_path / "ckpt.pt")
        assert result.diverged
        assert result.checkpoint_path.exists()

    def test_empty_dataset_rejected(self, tmp_path):
        with pytest.raises(ContractError):
            train([], smoke_train_config(), make_tiny_model_config(), tmp_path / "x.pt")


class TestCosine:
    def test_endpoints(self):
        assert cosine_lr(1e-3, 1e-5, 0, 100) == pytest.approx(1e-3)
        assert cosine_lr(1e-3, 1e-5, 99, 100) == pytest.approx(1e-5)

    def test_monotone_decay(self):
        values = [cosine_lr(5e-5, 1e-5, s, 50) for s in range(50)]
        assert all(a >= b for a, b in zip(values, values[1:]))


class TestConfigFile:
    def test_round_trip_keys(self):
        text = """
        # training schedule
        epochs = 12
        batch_size = 3
        lr_semantics = 5e-4
        lr_discovery_start = 5e-5
        lr_discovery_end = 1e-5
        prompt_point_prob = 0.49
        prompt_box_prob = 0.49
        prompt_mask_prob = 0.02
        seed = 7
        bce = 10
        dice = 1
        iou = 1
        l2 = 20
        sub = 10
        obj = 10
        rel = 20
        model.channels = 16
        model.num_queries = 3
        """
        config, model_overrides = parse_train_config(text)
        assert config.epochs == 12
        assert config.batch_size == 3
        assert config.seed == 7
        assert config.weights == LossWeights()
        assert model_overrides == {"channels": 16, "num_queries": 3}

    def test_unknown_key_rejected(self):
        with pytest.raises(FormatError):
            parse_train_config("warp_speed = 9")

    def test_bad_syntax_rejected(self):
        with pytest.raises(FormatError):
            parse_train_config("epochs")

    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ContractError):
            parse_train_config("prompt_point_prob = 0.9\nprompt_box_prob = 0.9\nprompt_mask_prob = 0.2")

    def test_paper_scale_defaults(self):
        config = TrainConfig()
        assert config.weights == LossWeights(bce=10, dice=1, iou=1, l2=20, sub=10, obj=10, rel=20)
        assert config.lr_semantics == pytest.approx(5e-4)
        assert (config.lr_discovery_start, config.lr_discovery_end) == (
            pytest.approx(5e-5),
            pytest.approx(1e-5),
        )
        assert config.prompt_probs == (0.49, 0.49, 0.02)
        assert config.clip_length == 8
