"""Trainable promptable-segmentation backbone and its per-clip session.

The backbone honors a three-part contract that downstream modules compile
against: encode a frame to a feature grid, turn one prompt into exactly one
(mask, object-token, confidence) triple, and propagate a tracked entity by
re-prompting with its previous predicted mask. A stronger foundation model
can replace this implementation behind the same surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .core.masks import BinaryMask, rle_decode, rle_encode
from .core.types import VisualPrompt
from .errors import ContractError

STRIDE = 4  # fixed by the encoder architecture (two stride-2 stages)


@dataclass(frozen=True)
class BackboneConfig:
    channels: int = 48
    heads: int = 4
    decoder_layers: int = 2
    fourier_bands: int = 4


@dataclass(frozen=True)
class FeatureGrid:
    """Encoded image features at 1/stride resolution, laid out (h', w', c)."""

    values: torch.Tensor = field(repr=False)
    stride: int = STRIDE

    @property
    def grid_height(self) -> int:
        return int(self.values.shape[0])

    @property
    def grid_width(self) -> int:
        return int(self.values.shape[1])

    @property
    def channels(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True)
class SegmentationResult:
    """One prompt's answer: a full-resolution mask plus its query token."""

    mask: BinaryMask
    mask_logits: np.ndarray = field(repr=False)
    object_token: np.ndarray = field(repr=False)
    confidence: float


@lru_cache(maxsize=32)
def _position_encoding_cached(height: int, width: int, channels: int, dtype_name: str) -> torch.Tensor:
    dtype = getattr(torch, dtype_name)
    half = channels // 2
    bands = half // 2
    ys = torch.arange(height, dtype=dtype).unsqueeze(1).expand(height, width) / max(height - 1, 1)
    xs = torch.arange(width, dtype=dtype).unsqueeze(0).expand(height, width) / max(width - 1, 1)
    freqs = (2.0 ** torch.arange(bands, dtype=dtype)) * math.pi
    parts = []
    for coord in (ys, xs):
        angles = coord.unsqueeze(-1) * freqs  # (h, w, bands)
        parts.extend((torch.sin(angles), torch.cos(angles)))
    enc = torch.cat(parts, dim=-1)  # (h, w, 4*bands)
    if enc.shape[-1] < channels:
        enc = F.pad(enc, (0, channels - enc.shape[-1]))
    return enc.reshape(height * width, channels).contiguous()


def position_encoding(height: int, width: int, channels: int, dtype: torch.dtype) -> torch.Tensor:
    """Fixed 2-D sinusoidal encoding for a flattened cell grid."""
    return _position_encoding_cached(height, width, channels, str(dtype).split(".")[-1])


def fourier_features(coords: torch.Tensor, bands: int) -> torch.Tensor:
    freqs = (2.0 ** torch.arange(bands, dtype=coords.dtype, device=coords.device)) * 2.0 * math.pi
    angles = coords.unsqueeze(-1) * freqs
    return torch.cat((torch.sin(angles), torch.cos(angles)), dim=-1).flatten(-2)


def downsample_mask(mask: torch.Tensor, stride: int = STRIDE) -> torch.Tensor:
    """Per-cell foreground coverage fraction of a dense (H, W) mask."""
    return F.avg_pool2d(mask[None, None].to(mask.dtype), stride)[0, 0]


def majority_cells(mask: torch.Tensor, stride: int = STRIDE) -> torch.Tensor:
    """Area-majority downsampling: a cell is foreground iff coverage > 0.5."""
    return downsample_mask(mask, stride) > 0.5


def mask_pool(values: torch.Tensor, cells: torch.Tensor) -> torch.Tensor | None:
    """Mean feature over foreground cells; None when no cell is foreground."""
    if not bool(cells.any()):
        return None
    return values[cells].mean(dim=0)


class ImageEncoder(nn.Module):
    """Conv stack to stride 4 whose output features carry absolute position.

    The positional encoding is baked into the feature grid itself (as in
    transformer-based foundation encoders), so anything pooled from these
    features - the subject token above all - knows where it came from.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, channels, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(channels, channels, 3, stride=1, padding=1),
            nn.GELU(),
            nn.Conv2d(channels, channels, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(channels, channels, 3, stride=1, padding=1),
        )

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, C, H/4, W/4); H and W must be multiples of 4."""
        if frames.shape[-1] % STRIDE or frames.shape[-2] % STRIDE:
            raise ContractError(f"frame size {tuple(frames.shape[-2:])} not divisible by {STRIDE}")
        out = self.net(frames)
        height, width = out.shape[-2], out.shape[-1]
        pe = position_encoding(height, width, out.shape[1], out.dtype).to(out.device)
        return out + pe.reshape(height, width, -1).permute(2, 0, 1)


class _Mlp(nn.Module):
    def __init__(self, dim_in: int, dim_hidden: int, dim_out: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(dim_in, dim_hidden), nn.GELU(), nn.Linear(dim_hidden, dim_out))

    def forward(self, x):
        return self.net(x)


class PromptEncoder(nn.Module):
    """Embeds a point, box, or mask cue into a query token plus a dense prior.

    The token carries prompt geometry through Fourier features (mask cues
    additionally mix in the image features pooled under the mask). The dense
    prior is an explicit cell-resolution map of the cue (a Gaussian bump for
    points, a box indicator, the coverage map for masks); without it the
    decoder would have to discover token-position alignment from scratch,
    which does not bootstrap at this scale.
    """

    KIND_INDEX = {"point": 0, "box": 1, "mask": 2}
    POINT_SIGMA_CELLS = 1.25

    def __init__(self, channels: int, bands: int):
        super().__init__()
        self.bands = bands
        self.kind_embed = nn.Embedding(3, channels)
        self.point_proj = nn.Linear(2 * 2 * bands, channels)
        self.box_proj = nn.Linear(4 * 2 * bands, channels)
        self.mask_geom_proj = nn.Linear(6 * 2 * bands + 1, channels)
        self.mask_feat_proj = nn.Linear(channels, channels)

    def _cell_centers(self, height: int, width: int, dtype: torch.dtype):
        ys = (torch.arange(height, dtype=dtype) + 0.5) / height
        xs = (torch.arange(width, dtype=dtype) + 0.5) / width
        return ys.unsqueeze(1).expand(height, width), xs.unsqueeze(0).expand(height, width)

    def point_prior(self, points: torch.Tensor, height: int, width: int) -> torch.Tensor:
        """(B, 2) normalized points -> (B, h', w') Gaussian bumps."""
        ys, xs = self._cell_centers(height, width, points.dtype)
        sigma = self.POINT_SIGMA_CELLS / max(height, width)
        dy = ys[None] - points[:, 1].reshape(-1, 1, 1)
        dx = xs[None] - points[:, 0].reshape(-1, 1, 1)
        return torch.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))

    def box_prior(self, box: torch.Tensor, height: int, width: int) -> torch.Tensor:
        ys, xs = self._cell_centers(height, width, box.dtype)
        inside = (xs >= box[0]) & (xs <= box[2]) & (ys >= box[1]) & (ys <= box[3])
        return inside.to(box.dtype)

    def mask_prior(self, mask: torch.Tensor, stride: int) -> torch.Tensor:
        return downsample_mask(mask, stride)

    def _kind(self, kind: str, like: torch.Tensor) -> torch.Tensor:
        idx = torch.tensor(self.KIND_INDEX[kind], device=like.device)
        return self.kind_embed(idx).to(like.dtype)

    def encode_point(self, point: torch.Tensor) -> torch.Tensor:
        return self.point_proj(fourier_features(point, self.bands)) + self._kind("point", point)

    def encode_box(self, box: torch.Tensor) -> torch.Tensor:
        return self.box_proj(fourier_features(box, self.bands)) + self._kind("box", box)

    def encode_mask(self, mask: torch.Tensor, grid: FeatureGrid) -> torch.Tensor:
        height, width = mask.shape
        area = mask.sum()
        if area > 0:
            rows, cols = torch.nonzero(mask > 0.5, as_tuple=True)
            cy = (rows.to(mask.dtype).mean() + 0.5) / height
            cx = (cols.to(mask.dtype).mean() + 0.5) / width
            box = torch.stack(
                (
                    cols.min().to(mask.dtype) / width,
                    rows.min().to(mask.dtype) / height,
                    (cols.max().to(mask.dtype) + 1) / width,
                    (rows.max().to(mask.dtype) + 1) / height,
                )
            )
        else:
            cy = torch.tensor(0.5, dtype=mask.dtype)
            cx = torch.tensor(0.5, dtype=mask.dtype)
            box = torch.tensor([0.0, 0.0, 1.0, 1.0], dtype=mask.dtype)
        geom = torch.cat((torch.stack((cx, cy)), box))
        frac = area / (height * width)
        encoded = torch.cat((fourier_features(geom, self.bands), frac.reshape(1)))
        token = self.mask_geom_proj(encoded)
        cells = majority_cells(mask, grid.stride)
        pooled = mask_pool(grid.values, cells)
        if pooled is None:
            pooled = grid.values.reshape(-1, grid.channels).mean(dim=0)
        return token + self.mask_feat_proj(pooled) + self._kind("mask", mask)


class TwoWayLayer(nn.Module):
    """One round of token->cells and cells->token attention."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.token_to_cells = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(channels)
        self.mlp = _Mlp(channels, channels * 2, channels)
        self.norm2 = nn.LayerNorm(channels)
        self.cells_to_token = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.norm3 = nn.LayerNorm(channels)

    def forward(self, tokens: torch.Tensor, cells: torch.Tensor):
        attended, _ = self.token_to_cells(tokens, cells, cells, need_weights=False)
        tokens = self.norm1(tokens + attended)
        tokens = self.norm2(tokens + self.mlp(tokens))
        back, _ = self.cells_to_token(cells, tokens, tokens, need_weights=False)
        cells = self.norm3(cells + back)
        return tokens, cells


class MaskDecoder(nn.Module):
    """Two-way attention refinement plus a two-scale hypernetwork mask head.

    The coarse head dots the refined token against the (position-carrying)
    cell stream directly, which converges fast; the fine head dots against
    deconv-upscaled features to sharpen boundaries beyond cell resolution.
    """

    def __init__(self, channels: int, heads: int, layers: int):
        super().__init__()
        self.layers = nn.ModuleList(TwoWayLayer(channels, heads) for _ in range(layers))
        out = channels // 4
        self.upscale = nn.Sequential(
            nn.ConvTranspose2d(channels, channels // 2, 2, stride=2),
            nn.GELU(),
            nn.ConvTranspose2d(channels // 2, out, 2, stride=2),
        )
        self.hyper_coarse = _Mlp(channels, channels, channels)
        self.hyper_fine = _Mlp(channels, channels, out)
        self.confidence_head = _Mlp(channels, channels, 1)
        self.prior_direction = nn.Parameter(torch.randn(channels) * 0.5)
        self.prior_scale = nn.Parameter(torch.tensor(2.0))

    def forward(self, prompt_tokens: torch.Tensor, priors: torch.Tensor, grid: FeatureGrid):
        """Tokens (C,)/(B, C) plus dense priors (h', w')/(B, h', w') -> masks.

        Each prompt attends the grid independently; batching only saves the
        repeated attention dispatch. The dense prior enters twice: as a
        learned channel direction added to the cell stream, and as a direct
        logit bias, so "segment what the cue indicates" is trainable from
        the first step.
        """
        single = prompt_tokens.dim() == 1
        tokens = prompt_tokens.reshape(-1, 1, prompt_tokens.shape[-1])
        batch = tokens.shape[0]
        h, w, c = grid.values.shape
        priors = priors.reshape(batch, h * w)
        # encoder features already carry absolute position; the dense prior
        # marks the prompt on top of them
        base = grid.values.reshape(h * w, c)
        direction = self.prior_direction.to(grid.values.dtype)
        cells = base[None] + priors[..., None] * direction
        for layer in self.layers:
            tokens, cells = layer(tokens, cells)
        token = tokens[:, 0]
        coarse = torch.einsum("bnc,bc->bn", cells, self.hyper_coarse(token)) / math.sqrt(c)
        prior_logits = self.prior_scale.to(grid.values.dtype) * priors
        coarse = F.interpolate(
            (coarse + prior_logits).reshape(batch, 1, h, w),
            scale_factor=STRIDE,
            mode="bilinear",
            align_corners=False,
        )[:, 0]
        spatial = cells.transpose(1, 2).reshape(batch, c, h, w)
        features = self.upscale(spatial)  # (B, c/4, H, W)
        fine_weights = self.hyper_fine(token)
        fine = torch.einsum("bchw,bc->bhw", features, fine_weights) / math.sqrt(
            fine_weights.shape[-1]
        )
        logits = coarse + fine
        confidence = torch.sigmoid(self.confidence_head(token))[:, 0]
        if single:
            return logits[0], token[0], confidence[0]
        return logits, token, confidence


class SegmentationBackbone(nn.Module):
    """Encoder + prompt encoder + mask decoder, one object per prompt."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.encoder = ImageEncoder(config.channels)
        self.prompt_encoder = PromptEncoder(config.channels, config.fourier_bands)
        self.decoder = MaskDecoder(config.channels, config.heads, config.decoder_layers)

    def encode(self, frame: torch.Tensor) -> FeatureGrid:
        """(3, H, W) or (B, 3, H, W) -> FeatureGrid (single frame only)."""
        batched = frame.dim() == 4
        out = self.encoder(frame if batched else frame[None])
        if batched:
            raise ContractError("encode() takes a single frame; use encoder() for batches")
        return FeatureGrid(values=out[0].permute(1, 2, 0))

    def embed_prompt(self, prompt: VisualPrompt, grid: FeatureGrid):
        """-> (query token (C,), dense prior (h', w')) for any prompt kind."""
        dtype = grid.values.dtype
        h, w = grid.grid_height, grid.grid_width
        if prompt.kind == "point":
            point = torch.tensor(prompt.point, dtype=dtype)
            token = self.prompt_encoder.encode_point(point)
            prior = self.prompt_encoder.point_prior(point[None], h, w)[0]
            return token, prior
        if prompt.kind == "box":
            box = torch.tensor(prompt.box, dtype=dtype)
            return self.prompt_encoder.encode_box(box), self.prompt_encoder.box_prior(box, h, w)
        dense = torch.from_numpy(rle_decode(prompt.mask).astype(np.float32)).to(dtype)
        return self.embed_mask_prompt(dense, grid)

    def embed_mask_prompt(self, dense_mask: torch.Tensor, grid: FeatureGrid):
        token = self.prompt_encoder.encode_mask(dense_mask, grid)
        return token, self.prompt_encoder.mask_prior(dense_mask, grid.stride)

    def embed_points(self, points: torch.Tensor, grid: FeatureGrid):
        """Batched point prompts: (B, 2) -> ((B, C) tokens, (B, h', w') priors)."""
        tokens = self.prompt_encoder.encode_point(points)
        priors = self.prompt_encoder.point_prior(points, grid.grid_height, grid.grid_width)
        return tokens, priors

    def segment_with_token(
        self, prompt_tokens: torch.Tensor, priors: torch.Tensor, grid: FeatureGrid
    ):
        """Decode prompt token(s) plus dense prior(s) against one grid."""
        return self.decoder(prompt_tokens, priors, grid)


class BackboneSession:
    """Inference-side state for one clip: feature cache plus entity memory.

    Single-writer: calls on one session must be externally serialized.
    """

    def __init__(self, model: SegmentationBackbone, frames: np.ndarray):
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise ContractError(f"expected (T, H, W, 3) frames, got {frames.shape}")
        self.model = model
        self.frames = torch.from_numpy(np.ascontiguousarray(frames, dtype=np.float32)).permute(
            0, 3, 1, 2
        )
        self.num_frames = int(frames.shape[0])
        self.height = int(frames.shape[1])
        self.width = int(frames.shape[2])
        self._grids: dict[int, FeatureGrid] = {}
        self._memory: dict[str, dict] = {}

    def encode_frame(self, frame_index: int) -> FeatureGrid:
        if not 0 <= frame_index < self.num_frames:
            raise ContractError(f"frame {frame_index} outside [0, {self.num_frames})")
        if frame_index not in self._grids:
            with torch.no_grad():
                grid = self.model.encode(self.frames[frame_index])
            if not bool(torch.isfinite(grid.values).all()):
                raise ContractError(f"non-finite features on frame {frame_index}")
            self._grids[frame_index] = grid
        return self._grids[frame_index]

    def _result(self, logits: torch.Tensor, token: torch.Tensor, conf: torch.Tensor) -> SegmentationResult:
        logits_np = logits.numpy().astype(np.float32)
        mask = rle_encode((logits_np > 0).astype(np.uint8))
        return SegmentationResult(
            mask=mask,
            mask_logits=logits_np,
            object_token=token.numpy().astype(np.float32),
            confidence=float(conf),
        )

    def segment(
        self, frame_index: int, prompt: VisualPrompt, track_as: str | None = None
    ) -> SegmentationResult:
        grid = self.encode_frame(frame_index)
        if prompt.kind == "mask" and (prompt.mask.height, prompt.mask.width) != (
            self.height,
            self.width,
        ):
            raise ContractError("mask prompt size differs from clip frame size")
        with torch.no_grad():
            token_in, prior = self.model.embed_prompt(prompt, grid)
            logits, token, conf = self.model.segment_with_token(token_in, prior, grid)
        result = self._result(logits, token, conf)
        if track_as is not None:
            self._remember(track_as, frame_index, result)
        return result

    def segment_points(self, frame_index: int, points: np.ndarray) -> list[SegmentationResult]:
        """Segment several point prompts on one frame in a single decoder pass."""
        points = np.asarray(points, dtype=np.float32)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ContractError(f"expected (N, 2) points, got {points.shape}")
        if points.size == 0:
            return []
        grid = self.encode_frame(frame_index)
        with torch.no_grad():
            tokens_in, priors = self.model.embed_points(torch.from_numpy(points), grid)
            logits, tokens, confs = self.model.segment_with_token(tokens_in, priors, grid)
        return [
            self._result(logits[i], tokens[i], confs[i]) for i in range(points.shape[0])
        ]

    def propagate(self, entity_id: str, to_frame: int) -> SegmentationResult:
        if entity_id not in self._memory:
            raise ContractError(f"unknown entity id {entity_id!r}")
        if not 0 <= to_frame < self.num_frames:
            raise ContractError(f"frame {to_frame} outside [0, {self.num_frames})")
        memory = self._memory[entity_id]
        grid = self.encode_frame(to_frame)
        source = memory["last_mask"] if memory["last_mask"].area > 0 else memory["anchor_mask"]
        dense = torch.from_numpy(rle_decode(source).astype(np.float32))
        with torch.no_grad():
            token_in, prior = self.model.embed_mask_prompt(dense, grid)
            logits, token, conf = self.model.segment_with_token(token_in, prior, grid)
        result = self._result(logits, token, conf)
        self._remember(entity_id, to_frame, result)
        return result

    def seed_entity(self, entity_id: str, frame_index: int, mask: BinaryMask) -> None:
        """Plant tracking memory directly, e.g. to restart a chain mid-clip."""
        if not 0 <= frame_index < self.num_frames:
            raise ContractError(f"frame {frame_index} outside [0, {self.num_frames})")
        self._memory[entity_id] = {"anchor_mask": mask, "last_mask": mask, "frame": frame_index}

    def _remember(self, entity_id: str, frame_index: int, result: SegmentationResult) -> None:
        memory = self._memory.setdefault(
            entity_id, {"anchor_mask": result.mask, "last_mask": result.mask, "frame": frame_index}
        )
        memory["last_mask"] = result.mask
        memory["frame"] = frame_index
        if result.mask.area > 0:
            memory["anchor_mask"] = result.mask

    def known_entities(self) -> tuple[str, ...]:
        return tuple(self._memory)
