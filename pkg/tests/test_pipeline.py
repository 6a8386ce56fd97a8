import numpy as np
import pytest
import torch

from promptsg.core.types import VisualPrompt
from promptsg.discovery import heatmap_discover
from promptsg.errors import ContractError
from promptsg.metrics import make_heatmap_discoverer
from promptsg.pipeline import PipelineConfig, run


@pytest.fixture()
def prompt(small_clip):
    subject = small_clip.subjects()[0]
    frame = small_clip.interactions_of(subject)[0].tracklet.t_start
    mask = small_clip.entities[subject].tube.mask_at(frame)
    return VisualPrompt(kind="mask", frame=frame, mask=mask)


class TestRun:
    def test_emitted_tracklets_satisfy_invariants(self, untrained_model, small_clip, prompt):
        result = run(untrained_model, small_clip.frames, prompt)
        null_obj = untrained_model.config.num_object_classes - 1
        null_rel = untrained_model.config.num_predicate_classes - 1
        for tracklet in result.scene_graph.tracklets:
            assert tracklet.subject_tube.t_start == tracklet.object_tube.t_start
            assert tracklet.subject_tube.t_end == tracklet.object_tube.t_end
            assert tracklet.object_class != null_obj
            assert tracklet.predicate_class != null_rel
            assert 0.0 <= tracklet.confidence <= 1.0

    def test_tracklets_sorted_by_confidence(self, untrained_model, small_clip, prompt):
        result = run(untrained_model, small_clip.frames, prompt)
        confs = [t.confidence for t in result.scene_graph.tracklets]
        assert confs == sorted(confs, reverse=True)

    def test_subject_tube_shared_across_tracklets(self, untrained_model, small_clip, prompt):
        result = run(untrained_model, small_clip.frames, prompt)
        for tracklet in result.scene_graph.tracklets:
            for t in range(tracklet.t_start, tracklet.t_end + 1):
                assert tracklet.subject_tube.mask_at(t) == result.subject_masks[t]

    def test_bit_deterministic(self, untrained_model, small_clip, prompt):
        a = run(untrained_model, small_clip.frames, prompt)
        b = run(untrained_model, small_clip.frames, prompt)
        assert a.scene_graph == b.scene_graph
        assert set(a.discoveries) == set(b.discoveries)
        for t in a.discoveries:
            assert (a.discoveries[t].points == b.discoveries[t].points).all()

    def test_prompt_frame_out_of_range(self, untrained_model, small_clip):
        bad = VisualPrompt(kind="point", frame=99, point=(0.5, 0.5))
        with pytest.raises(ContractError):
            run(untrained_model, small_clip.frames, bad)

    def test_subject_not_found_when_mask_empty(self, untrained_model, small_clip, prompt):
        # zeroed mask heads -> zero logits -> empty masks everywhere:
        # not-found is a result, not an error
        decoder = untrained_model.backbone.decoder
        touched = [decoder.hyper_coarse.net[-1], decoder.hyper_fine.net[-1]]
        saved = [(m.weight.clone(), m.bias.clone()) for m in touched]
        saved_scale = decoder.prior_scale.detach().clone()
        with torch.no_grad():
            for module in touched:
                module.weight.zero_()
                module.bias.zero_()
            decoder.prior_scale.zero_()
        try:
            result = run(untrained_model, small_clip.frames, prompt)
            assert not result.scene_graph.subject_found
            assert result.scene_graph.tracklets == ()
        finally:
            with torch.no_grad():
                for module, (w, b) in zip(touched, saved):
                    module.weight.copy_(w)
                    module.bias.copy_(b)
                decoder.prior_scale.copy_(saved_scale)

    def test_confidence_floor_forces_not_found(self, untrained_model, small_clip, prompt):
        config = PipelineConfig(activity_confidence_floor=1.0)
        result = run(untrained_model, small_clip.frames, prompt, config)
        assert not result.scene_graph.subject_found

    def test_two_prompts_give_independent_outputs(self, untrained_model, small_clip):
        subjects = small_clip.subjects()
        outputs = []
        for subject in subjects[:2]:
            frame = small_clip.interactions_of(subject)[0].tracklet.t_start
            mask = small_clip.entities[subject].tube.mask_at(frame)
            prompt = VisualPrompt(kind="mask", frame=frame, mask=mask)
            outputs.append(run(untrained_model, small_clip.frames, prompt))
        assert outputs[0].scene_graph.subject_prompt != outputs[1].scene_graph.subject_prompt

    def test_discovery_cadence_thins_frames(self, untrained_model, small_clip, prompt):
        every = run(untrained_model, small_clip.frames, prompt, PipelineConfig(discovery_cadence=1))
        sparse = run(untrained_model, small_clip.frames, prompt, PipelineConfig(discovery_cadence=4))
        assert len(sparse.discoveries) < len(every.discoveries)
        for t in sparse.discoveries:
            assert (t - prompt.frame) % 4 == 0

    def test_heuristic_discoverer_plugs_in(self, untrained_model, small_clip, prompt):
        heatmap = np.zeros((16, 16))
        heatmap[8, 8] = 1.0
        rng = np.random.default_rng(0)
        discoverer = make_heatmap_discoverer(heatmap, 3, rng, untrained_model.config.channels)
        result = run(untrained_model, small_clip.frames, prompt, discoverer=discoverer)
        for found in result.discoveries.values():
            assert np.allclose(found.points, (8 + 0.5) / 16)

    def test_min_track_length_drops_short_tracks(self, untrained_model, small_clip, prompt):
        long_only = run(
            untrained_model,
            small_clip.frames,
            prompt,
            PipelineConfig(min_track_length=small_clip.num_frames + 1),
        )
        assert long_only.scene_graph.tracklets == ()


def test_config_validation():
    with pytest.raises(ContractError):
        PipelineConfig(discovery_cadence=0)
    with pytest.raises(ContractError):
        PipelineConfig(link_iou_threshold=1.5)
