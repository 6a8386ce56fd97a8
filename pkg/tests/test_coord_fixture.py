"""The canvas->normalized mapping fixture, checked from the server side.

The browser client sends the center of the clicked canvas cell; this suite
pins that the server's pixel lookup lands exactly on the canvas cell's frame
pixel for every fixture case (the client test checks the same file).
"""

import json
from pathlib import Path

import numpy as np

from promptsg.core.masks import point_in_mask, rle_encode

FIXTURE = json.loads(
    (Path(__file__).resolve().parent / "fixtures" / "coord_mapping.json").read_text()
)


def test_fixture_normalized_values_are_cell_centers():
    for case in FIXTURE["cases"]:
        assert case["normalized_x"] == (case["canvas_x"] + 0.5) / case["canvas_width"]
        assert case["normalized_y"] == (case["canvas_y"] + 0.5) / case["canvas_height"]


def test_pixel_lookup_matches_fixture():
    for case in FIXTURE["cases"]:
        col = min(int(case["normalized_x"] * case["frame_width"]), case["frame_width"] - 1)
        row = min(int(case["normalized_y"] * case["frame_height"]), case["frame_height"] - 1)
        assert (col, row) == (case["pixel_col"], case["pixel_row"]), case


def test_point_in_mask_agrees_with_fixture_pixel():
    for case in FIXTURE["cases"]:
        grid = np.zeros((case["frame_height"], case["frame_width"]), dtype=np.uint8)
        grid[case["pixel_row"], case["pixel_col"]] = 1
        mask = rle_encode(grid)
        assert point_in_mask((case["normalized_x"], case["normalized_y"]), mask)
