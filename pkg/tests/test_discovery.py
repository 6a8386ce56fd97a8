import numpy as np
import pytest
import torch
from scipy import stats

from promptsg.backbone import BackboneSession, FeatureGrid
from promptsg.core.masks import rle_decode
from promptsg.discovery import (
    DiscoveryConfig,
    InteractionDiscoverer,
    build_object_heatmap,
    heatmap_discover,
)
from promptsg.errors import ContractError


@pytest.fixture()
def discoverer():
    torch.manual_seed(0)
    return InteractionDiscoverer(DiscoveryConfig(num_queries=3, token_dim=16, heads=2))


def random_grid(rng, h=6, w=6, c=16):
    return FeatureGrid(values=torch.from_numpy(rng.standard_normal((h, w, c)).astype(np.float32)))


class TestSubjectToken:
    def test_constant_grid_pools_to_constant(self, discoverer):
        values = torch.full((4, 4, 16), 2.5)
        grid = FeatureGrid(values=values)
        mask = torch.zeros(16, 16)
        mask[0:8, 0:8] = 1.0
        token, fallback = discoverer.build_subject_token(grid, mask)
        assert not fallback
        expected = discoverer.subject_embed + 2.5
        assert torch.allclose(token, expected)

    def test_single_cell_mask_pools_that_cell(self, discoverer, rng):
        grid = random_grid(rng)
        mask = torch.zeros(24, 24)
        mask[4:8, 8:12] = 1.0  # exactly cell (1, 2) at stride 4
        token, fallback = discoverer.build_subject_token(grid, mask)
        assert not fallback
        assert torch.allclose(token, discoverer.subject_embed + grid.values[1, 2])

    def test_maskpool_matches_naive_loop(self, discoverer, rng):
        for _ in range(50):
            grid = random_grid(rng)
            dense = rng.integers(0, 2, size=(24, 24)).astype(np.float32)
            mask = torch.from_numpy(dense)
            token, fallback = discoverer.build_subject_token(grid, mask)
            coverage = dense.reshape(6, 4, 6, 4).mean(axis=(1, 3))
            cells = coverage > 0.5
            if not cells.any():
                assert fallback
                continue
            naive = grid.values.numpy()[cells].mean(axis=0)
            delta = (token - discoverer.subject_embed).detach().numpy()
            assert np.abs(delta - naive).max() < 1e-6

    def test_empty_downsample_falls_back_to_global_mean(self, discoverer, rng):
        grid = random_grid(rng)
        tiny = torch.zeros(24, 24)
        tiny[0, 0] = 1.0  # vanishes under area-majority pooling
        token, fallback = discoverer.build_subject_token(grid, tiny)
        assert fallback
        expected = discoverer.subject_embed + grid.values.reshape(-1, 16).mean(dim=0)
        assert torch.allclose(token, expected)


class TestDiscover:
    def test_output_contract(self, discoverer, rng):
        grid = random_grid(rng)
        mask = torch.ones(24, 24)
        out = discoverer.discover(grid, mask)
        assert out.points.shape == (3, 2)
        assert ((out.points >= 0) & (out.points <= 1)).all()
        assert out.query_features.shape == (3, 16)

    def test_deterministic(self, discoverer, rng):
        grid = random_grid(rng)
        mask = torch.ones(24, 24)
        a = discoverer.discover(grid, mask)
        b = discoverer.discover(grid, mask)
        assert (a.points == b.points).all()

    def test_subject_conditioning_changes_points(self, untrained_model, small_clip):
        session = BackboneSession(untrained_model.backbone, small_clip.frames)
        grid = session.encode_frame(0)
        mask_a = small_clip.entities[0].tube.mask_at(0)
        mask_b = small_clip.entities[1].tube.mask_at(0)
        out_a = untrained_model.discovery.discover(grid, mask_a)
        out_b = untrained_model.discovery.discover(grid, mask_b)
        assert not np.allclose(out_a.points, out_b.points)

    def test_nonfinite_features_rejected(self, discoverer):
        grid = FeatureGrid(values=torch.full((4, 4, 16), float("nan")))
        with pytest.raises(Exception):
            discoverer.discover(grid, torch.ones(16, 16))

    def test_l2_gradient_reaches_every_parameter(self, discoverer, rng):
        grid = random_grid(rng)
        mask = torch.zeros(24, 24)
        mask[8:16, 8:16] = 1.0
        token, _ = discoverer.build_subject_token(grid, mask)
        points, _ = discoverer.discover_tokens(grid, token)
        targets = torch.from_numpy(rng.uniform(0.2, 0.8, size=(3, 2)).astype(np.float32))
        loss = ((points - targets) ** 2).sum()
        loss.backward()
        for name, param in discoverer.named_parameters():
            assert param.grad is not None, name
            assert param.grad.abs().sum() > 0, name


class TestHeuristic:
    def test_degenerate_heatmap_stacks_all_points(self, rng):
        heatmap = np.zeros((4, 4))
        heatmap[2, 1] = 1.0
        out = heatmap_discover(heatmap, 3, rng, token_dim=8)
        expected = np.array([(1 + 0.5) / 4, (2 + 0.5) / 4])
        assert np.allclose(out.points, expected[None].repeat(3, axis=0))
        assert (out.query_features == 0).all()

    def test_all_zero_heatmap_rejected(self, rng):
        with pytest.raises(ContractError):
            heatmap_discover(np.zeros((4, 4)), 3, rng)

    def test_negative_mass_rejected(self, rng):
        heatmap = np.ones((4, 4))
        heatmap[0, 0] = -1
        with pytest.raises(ContractError):
            heatmap_discover(heatmap, 3, rng)

    def test_uniform_heatmap_sampled_uniformly(self):
        rng = np.random.default_rng(7)
        heatmap = np.ones((4, 4)) / 16.0
        counts = np.zeros(16)
        draws = 10_000
        for _ in range(draws):
            out = heatmap_discover(heatmap, 1, rng, token_dim=4)
            col = int(out.points[0, 0] * 4)
            row = int(out.points[0, 1] * 4)
            counts[row * 4 + col] += 1
        chi2 = ((counts - draws / 16.0) ** 2 / (draws / 16.0)).sum()
        p_value = stats.chi2.sf(chi2, df=15)
        assert p_value > 0.01

    def test_heatmap_built_from_object_masses(self, small_clip):
        heatmap = build_object_heatmap([small_clip], 16, 16, 4)
        assert heatmap.shape == (16, 16)
        assert heatmap.sum() == pytest.approx(1.0)
        # mass sits where interaction objects actually are
        dense = np.zeros((16, 16))
        for gt in small_clip.ground_truth:
            for mask in gt.tracklet.object_tube.masks:
                coarse = rle_decode(mask).reshape(16, 4, 16, 4).mean(axis=(1, 3))
                dense += coarse
        assert (heatmap[dense == 0] == 0).all()
