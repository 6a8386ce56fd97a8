"""Binary masks, run-length coding, and mask/tube geometry.

Conventions used everywhere in the package:

* Run-length encoding is row-major and always starts with a background run,
  which may have length zero.
* Normalized coordinates are ``x = column / width``, ``y = row / height``
  with the origin at the top-left pixel corner.
* The IoU of two empty masks is defined as 1.0 (vacuous agreement); an empty
  mask against a non-empty one scores 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, FormatError


@dataclass(frozen=True)
class BinaryMask:
    """A single-frame foreground bitmap stored as RLE runs."""

    height: int
    width: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise FormatError(f"mask dimensions must be positive, got {self.height}x{self.width}")
        if any(r < 0 for r in self.runs):
            raise FormatError(f"negative run length in {self.runs}")
        if sum(self.runs) != self.height * self.width:
            raise FormatError(
                f"runs sum to {sum(self.runs)}, expected {self.height * self.width}"
            )

    @property
    def area(self) -> int:
        """Foreground pixel count (odd-indexed runs are foreground)."""
        return sum(self.runs[1::2])

    def to_dense(self) -> np.ndarray:
        return rle_decode(self)

    @staticmethod
    def from_dense(bitmap: np.ndarray) -> "BinaryMask":
        return rle_encode(bitmap)

    @staticmethod
    def empty(height: int, width: int) -> "BinaryMask":
        return BinaryMask(height, width, (height * width,))

    @staticmethod
    def full(height: int, width: int) -> "BinaryMask":
        return BinaryMask(height, width, (0, height * width))


def rle_encode(bitmap: np.ndarray) -> BinaryMask:
    """Encode a dense 0/1 grid into a BinaryMask.

    The run order is row-major starting with a (possibly zero-length)
    background run, so ``runs[0]`` is always a count of zeros.
    """
    arr = np.asarray(bitmap)
    if arr.ndim != 2 or arr.size == 0:
        raise FormatError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all():
        raise FormatError(f"grid contains non-binary values {values.tolist()}")

    flat = arr.ravel(order="C").astype(np.uint8)
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return BinaryMask(int(arr.shape[0]), int(arr.shape[1]), tuple(int(r) for r in runs))


def rle_decode(mask: BinaryMask) -> np.ndarray:
    """Decode a BinaryMask back to a dense uint8 grid."""
    values = np.arange(len(mask.runs), dtype=np.uint8) % 2
    flat = np.repeat(values, mask.runs)
    return flat.reshape(mask.height, mask.width)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two same-sized masks.

    Two empty masks score 1.0; empty versus non-empty scores 0.0.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ContractError(
            f"mask dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    da, db = rle_decode(a).astype(bool), rle_decode(b).astype(bool)
    inter = int(np.count_nonzero(da & db))
    union = int(np.count_nonzero(da | db))
    if union == 0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class MaskTube:
    """A per-frame mask sequence over the inclusive window [t_start, t_end]."""

    t_start: int
    t_end: int
    masks: tuple[BinaryMask, ...] = field(repr=False)

    def __post_init__(self):
        if self.t_start < 0 or self.t_end < self.t_start:
            raise FormatError(f"bad window [{self.t_start}, {self.t_end}]")
        expected = self.t_end - self.t_start + 1
        if len(self.masks) != expected:
            raise FormatError(f"window holds {expected} frames but {len(self.masks)} masks given")
        sizes = {(m.height, m.width) for m in self.masks}
        if len(sizes) > 1:
            raise FormatError(f"masks in one tube have mixed sizes {sorted(sizes)}")

    @property
    def height(self) -> int:
        return self.masks[0].height

    @property
    def width(self) -> int:
        return self.masks[0].width

    def mask_at(self, t: int) -> BinaryMask:
        """The mask at absolute frame t; empty outside the window."""
        if self.t_start <= t <= self.t_end:
            return self.masks[t - self.t_start]
        return BinaryMask.empty(self.height, self.width)


def tube_iou(a: MaskTube, b: MaskTube, mode: str = "tube") -> float:
    """Spatio-temporal IoU over the union of the two windows.

    ``mode="tube"`` is volumetric: summed per-frame intersections over summed
    per-frame unions. ``mode="frame_avg"`` averages per-frame IoU instead,
    scoring frames where both masks are empty as 1.0.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ContractError(
            f"tube frame sizes differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    if mode not in ("tube", "frame_avg"):
        raise ContractError(f"unknown iou mode {mode!r}")

    t0 = min(a.t_start, b.t_start)
    t1 = max(a.t_end, b.t_end)
    inter_total = 0
    union_total = 0
    frame_ious = []
    for t in range(t0, t1 + 1):
        da = rle_decode(a.mask_at(t)).astype(bool)
        db = rle_decode(b.mask_at(t)).astype(bool)
        inter = int(np.count_nonzero(da & db))
        union = int(np.count_nonzero(da | db))
        inter_total += inter
        union_total += union
        frame_ious.append(1.0 if union == 0 else inter / union)
    if mode == "frame_avg":
        return float(np.mean(frame_ious))
    if union_total == 0:
        return 1.0
    return inter_total / union_total


def point_in_mask(point: tuple[float, float], mask: BinaryMask) -> bool:
    """Whether a normalized (x, y) point lands on a foreground pixel.

    The pixel is (floor(x*width), floor(y*height)), clamped so x=1.0 or
    y=1.0 still map to the last column/row.
    """
    x, y = point
    col = min(int(x * mask.width), mask.width - 1)
    row = min(int(y * mask.height), mask.height - 1)
    col = max(col, 0)
    row = max(row, 0)
    return bool(rle_decode(mask)[row, col])
