import numpy as np
import pytest
from scipy import stats

from promptsg.core.masks import point_in_mask, rle_encode
from promptsg.errors import ContractError
from promptsg.training import distance_weights, sample_gt_point, sample_uniform_point, tight_box


def block_3x3_in_5x5():
    grid = np.zeros((5, 5), dtype=np.uint8)
    grid[1:4, 1:4] = 1
    return rle_encode(grid)


class TestDistanceWeights:
    def test_manual_3x3_fixture(self):
        # center pixel sits 2 away from background, the ring sits 1 away
        weights = distance_weights(block_3x3_in_5x5())
        assert weights[2, 2] == pytest.approx(2.0)
        ring = [(1, 1), (1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2), (3, 3)]
        for r, c in ring:
            assert weights[r, c] == pytest.approx(1.0)
        assert weights.sum() == pytest.approx(10.0)

    def test_border_counts_as_background(self):
        grid = np.ones((3, 3), dtype=np.uint8)
        weights = distance_weights(rle_encode(grid))
        assert weights[1, 1] == pytest.approx(2.0)
        assert weights[0, 0] == pytest.approx(1.0)


class TestSampleGtPoint:
    def test_single_pixel_is_certain(self, rng):
        grid = np.zeros((4, 6), dtype=np.uint8)
        grid[2, 3] = 1
        mask = rle_encode(grid)
        for _ in range(20):
            assert sample_gt_point(mask, rng) == ((3 + 0.5) / 6, (2 + 0.5) / 4)

    def test_center_frequency_follows_distance_law(self):
        rng = np.random.default_rng(42)
        mask = block_3x3_in_5x5()
        draws = 20_000
        center = sum(
            sample_gt_point(mask, rng) == ((2 + 0.5) / 5, (2 + 0.5) / 5) for _ in range(draws)
        )
        assert abs(center / draws - 0.2) < 0.01

    def test_chi_square_against_distance_law(self):
        rng = np.random.default_rng(9)
        mask = block_3x3_in_5x5()
        weights = distance_weights(mask)
        probs = weights[weights > 0] / weights.sum()
        coords = list(zip(*np.nonzero(weights)))
        index = {rc: i for i, rc in enumerate(coords)}
        counts = np.zeros(len(coords))
        draws = 20_000
        for _ in range(draws):
            x, y = sample_gt_point(mask, rng)
            rc = (int(y * 5), int(x * 5))
            counts[index[rc]] += 1
        chi2 = ((counts - draws * probs) ** 2 / (draws * probs)).sum()
        assert stats.chi2.sf(chi2, df=len(coords) - 1) > 0.01

    def test_samples_always_inside_mask(self, rng):
        for _ in range(20):
            grid = (rng.random((12, 10)) > 0.7).astype(np.uint8)
            if grid.sum() == 0:
                grid[4, 4] = 1
            mask = rle_encode(grid)
            for _ in range(50):
                assert point_in_mask(sample_gt_point(mask, rng), mask)

    def test_empty_mask_rejected(self, rng):
        with pytest.raises(ContractError):
            sample_gt_point(rle_encode(np.zeros((3, 3), dtype=np.uint8)), rng)


class TestUniformPoint:
    def test_always_inside(self, rng):
        grid = (np.arange(36).reshape(6, 6) % 5 == 0).astype(np.uint8)
        mask = rle_encode(grid)
        for _ in range(200):
            assert point_in_mask(sample_uniform_point(mask, rng), mask)

    def test_covers_all_pixels(self):
        rng = np.random.default_rng(3)
        grid = np.zeros((2, 2), dtype=np.uint8)
        grid[0, 0] = grid[1, 1] = 1
        mask = rle_encode(grid)
        seen = {sample_uniform_point(mask, rng) for _ in range(100)}
        assert len(seen) == 2


class TestTightBox:
    def test_exact_bounds(self):
        grid = np.zeros((8, 10), dtype=np.uint8)
        grid[2:5, 3:7] = 1
        assert tight_box(rle_encode(grid)) == (3 / 10, 2 / 8, 7 / 10, 5 / 8)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            tight_box(rle_encode(np.zeros((3, 3), dtype=np.uint8)))
