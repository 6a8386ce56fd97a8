"""Subject-conditioned discovery of interacting-object prompt points.

A learned subject embedding plus the subject's mask-pooled features form a
subject token; that token is prepended to a fixed set of learnable object
queries, run through a small transformer decoder that cross-attends to the
frame's feature cells, and the refined object queries are regressed to
normalized (x, y) prompt points.

The module also hosts the non-conditioned baseline: sampling points from a
dataset-level object-location heatmap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .backbone import FeatureGrid, _Mlp, majority_cells, mask_pool, position_encoding
from .core.masks import BinaryMask, rle_decode
from .errors import ContractError, NumericalError


@dataclass(frozen=True)
class DiscoveryConfig:
    num_queries: int = 3
    decoder_layers: int = 2
    token_dim: int = 48
    heads: int = 4

    def __post_init__(self):
        if self.num_queries < 1:
            raise ContractError("num_queries must be >= 1")
        if self.token_dim % self.heads:
            raise ContractError(f"token_dim {self.token_dim} not divisible by heads {self.heads}")


@dataclass(frozen=True)
class DiscoveryOutput:
    points: np.ndarray = field(repr=False)  # (N_q, 2) normalized (x, y)
    query_features: np.ndarray = field(repr=False)  # (N_q, token_dim)
    used_pool_fallback: bool = False

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ContractError(f"points must be (N_q, 2), got {self.points.shape}")
        if not ((self.points >= 0.0) & (self.points <= 1.0)).all():
            raise ContractError("discovered points must lie in [0,1]^2")


class _DiscoveryLayer(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(dim)
        self.cross_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = _Mlp(dim, dim * 2, dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, tokens: torch.Tensor, cells: torch.Tensor):
        attended, _ = self.self_attn(tokens, tokens, tokens, need_weights=False)
        tokens = self.norm1(tokens + attended)
        cross, _ = self.cross_attn(tokens, cells, cells, need_weights=False)
        tokens = self.norm2(tokens + cross)
        return self.norm3(tokens + self.mlp(tokens))


class InteractionDiscoverer(nn.Module):
    def __init__(self, config: DiscoveryConfig):
        super().__init__()
        self.config = config
        dim = config.token_dim
        self.subject_embed = nn.Parameter(torch.randn(dim) * 0.02)
        self.query_embed = nn.Parameter(torch.randn(config.num_queries, dim) * 0.02)
        self.layers = nn.ModuleList(
            _DiscoveryLayer(dim, config.heads) for _ in range(config.decoder_layers)
        )
        self.point_head = _Mlp(dim, dim, 2)

    def build_subject_token(
        self, grid: FeatureGrid, subject_mask: torch.Tensor
    ) -> tuple[torch.Tensor, bool]:
        """Learned subject embedding plus mask-pooled features.

        Tiny subjects can vanish under area-majority downsampling; those fall
        back to global mean pooling and report the fallback to the caller.
        """
        cells = majority_cells(subject_mask, grid.stride)
        pooled = mask_pool(grid.values, cells)
        fallback = pooled is None
        if fallback:
            pooled = grid.values.reshape(-1, grid.channels).mean(dim=0)
        return self.subject_embed.to(pooled.dtype) + pooled, fallback

    def discover_tokens(self, grid: FeatureGrid, subject_token: torch.Tensor):
        """Torch-level forward: (points (N_q, 2), query features (N_q, dim)).

        Cells come from the backbone encoder and therefore already embed
        their own positions.
        """
        if not bool(torch.isfinite(grid.values).all()):
            raise NumericalError("feature grid contains non-finite values")
        h, w, c = grid.values.shape
        cells = grid.values.reshape(1, h * w, c)
        queries = self.query_embed.to(subject_token.dtype)
        tokens = torch.cat((subject_token[None], queries))[None]
        for layer in self.layers:
            tokens = layer(tokens, cells)
        object_tokens = tokens[0, 1:]
        points = torch.sigmoid(self.point_head(object_tokens))
        return points, object_tokens

    def discover(
        self, grid: FeatureGrid, subject_mask: BinaryMask | torch.Tensor
    ) -> DiscoveryOutput:
        """Inference-side wrapper returning numpy payloads."""
        if isinstance(subject_mask, BinaryMask):
            subject_mask = torch.from_numpy(rle_decode(subject_mask).astype(np.float32)).to(
                grid.values.dtype
            )
        with torch.no_grad():
            token, fallback = self.build_subject_token(grid, subject_mask)
            points, features = self.discover_tokens(grid, token)
        return DiscoveryOutput(
            points=points.numpy().astype(np.float64),
            query_features=features.numpy().astype(np.float32),
            used_pool_fallback=fallback,
        )


def build_object_heatmap(clips, grid_height: int, grid_width: int, stride: int) -> np.ndarray:
    """Dataset-level object-location prior at feature-grid resolution.

    Accumulates the masks of every interaction object over every ground-truth
    frame of the given clips, then normalizes to a distribution over cells.
    """
    acc = np.zeros((grid_height, grid_width), dtype=np.float64)
    for clip in clips:
        for gt in clip.ground_truth:
            tube = gt.tracklet.object_tube
            for mask in tube.masks:
                dense = torch.from_numpy(rle_decode(mask).astype(np.float32))
                acc += (
                    torch.nn.functional.avg_pool2d(dense[None, None], stride)[0, 0].numpy()
                )
    total = acc.sum()
    if total <= 0:
        raise ContractError("no object mass found while building the heatmap")
    return acc / total


def heatmap_discover(
    heatmap: np.ndarray, num_points: int, rng: np.random.Generator, token_dim: int = 48
) -> DiscoveryOutput:
    """Sample prompt points from the dataset prior (subject-agnostic).

    Cells are drawn without replacement while distinct positive-mass cells
    remain; a degenerate heatmap concentrates every point on its single cell.
    Points land at cell centers; query features are zeros.
    """
    if heatmap.ndim != 2:
        raise ContractError(f"heatmap must be 2-D, got shape {heatmap.shape}")
    if (heatmap < 0).any():
        raise ContractError("heatmap has negative mass")
    total = heatmap.sum()
    if total <= 0:
        raise ContractError("heatmap has no mass")
    probs = (heatmap / total).ravel()
    positive = np.flatnonzero(probs > 0)
    height, width = heatmap.shape

    if positive.size >= num_points:
        chosen = rng.choice(probs.size, size=num_points, replace=False, p=probs)
    else:
        extra = rng.choice(probs.size, size=num_points - positive.size, replace=True, p=probs)
        chosen = np.concatenate((positive, extra))
    rows, cols = np.unravel_index(chosen, heatmap.shape)
    points = np.stack(((cols + 0.5) / width, (rows + 0.5) / height), axis=1)
    return DiscoveryOutput(
        points=points.astype(np.float64),
        query_features=np.zeros((num_points, token_dim), dtype=np.float32),
    )
