"""
Trajectory-aware attention.

Every cell of an agent's map is a query that attends only to the features
sampled at its own n offset positions:

    softmax(q Wq (R Wk)^T / sqrt(d)) R Wv

split over heads, concatenated and output-projected, followed by
Add & Norm, a feed-forward block and a second Add & Norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import torch
from torch import nn

from . import constants as const
from .exceptions import ShapeError
from .featuremap import FeatureMap
from .geometry import sample_bilinear
from .offsets import OffsetMap, OffsetSet
from .utils import check_heads

OffsetSource = Union[OffsetMap, Callable[[FeatureMap], OffsetMap]]


@dataclass(frozen=True)
class AttentionConfig:
    """
    Shape and block switches of the attention stack.

    Attributes:
        channels: Feature width C
        heads: Attention heads; C must split evenly
        layers: Stacked layers
        residual: Add the query back after attention and FFN
        norm: LayerNorm after each residual add
        ffn: Use the feed-forward block
    """

    channels: int = const.FEATURE_CHANNELS
    heads: int = const.ATTENTION_HEADS
    layers: int = const.ATTENTION_LAYERS
    residual: bool = True
    norm: bool = True
    ffn: bool = True

    @property
    def head_dim(self) -> int:
        return check_heads(self.channels, self.heads)


def gather_response(
    f: Union[FeatureMap, torch.Tensor],
    offsets: Union[OffsetSet, OffsetMap, torch.Tensor],
) -> torch.Tensor:
    """
    Bilinearly sample features at attention positions.

    Args:
        f: FeatureMap or (C, H, W) tensor
        offsets: One query's set (n, 2), a full map (H, W, n, 2) or a raw position tensor

    Returns:
        Positions' shape with the trailing 2 replaced by C; out-of-grid samples are zero
    """
    data = f.data if isinstance(f, FeatureMap) else f
    positions = offsets.positions if isinstance(offsets, (OffsetSet, OffsetMap)) else offsets
    return sample_bilinear(data, positions[..., 0], positions[..., 1])


class AttentionLayer(nn.Module):
    """One attention block with optional FFN and Add & Norm."""

    def __init__(self, config: AttentionConfig = AttentionConfig()) -> None:
        super().__init__()
        c = config.channels
        self.config = config
        self.head_dim = config.head_dim
        self.w_q = nn.Linear(c, c, bias=False, dtype=torch.float64)
        self.w_k = nn.Linear(c, c, bias=False, dtype=torch.float64)
        self.w_v = nn.Linear(c, c, bias=False, dtype=torch.float64)
        self.out_proj = nn.Linear(c, c, dtype=torch.float64)
        self.ffn = nn.Sequential(
            nn.Linear(c, const.FFN_RATIO * c, dtype=torch.float64),
            nn.ReLU(),
            nn.Linear(const.FFN_RATIO * c, c, dtype=torch.float64),
        )
        self.norm1 = nn.LayerNorm(c, dtype=torch.float64)
        self.norm2 = nn.LayerNorm(c, dtype=torch.float64)

    def attention_weights(self, q: torch.Tensor, responses: torch.Tensor) -> torch.Tensor:
        """(..., C) queries and (..., n, C) responses -> (..., heads, n) weights."""
        heads, d = self.config.heads, self.head_dim
        qh = self.w_q(q).unflatten(-1, (heads, d))
        kh = self.w_k(responses).unflatten(-1, (heads, d))
        logits = torch.einsum("...hd,...nhd->...hn", qh, kh) / math.sqrt(d)
        return torch.softmax(logits, dim=-1)

    def attend(self, q: torch.Tensor, responses: torch.Tensor) -> torch.Tensor:
        """Multi-head attention of each query over its own response rows."""
        heads, d = self.config.heads, self.head_dim
        weights = self.attention_weights(q, responses)
        vh = self.w_v(responses).unflatten(-1, (heads, d))
        out = torch.einsum("...hn,...nhd->...hd", weights, vh).flatten(-2)
        return self.out_proj(out)

    def forward(self, q: torch.Tensor, responses: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        h = self.attend(q, responses)
        if cfg.residual:
            h = q + h
        if cfg.norm:
            h = self.norm1(h)
        if cfg.ffn:
            f = self.ffn(h)
            h = h + f if cfg.residual else f
            if cfg.norm:
                h = self.norm2(h)
        return h


class AttentionStack(nn.Module):
    """``config.layers`` attention layers applied in sequence."""

    def __init__(self, config: AttentionConfig = AttentionConfig()) -> None:
        super().__init__()
        self.config = config
        self.layers = nn.ModuleList(AttentionLayer(config) for _ in range(config.layers))

    @classmethod
    def uniform(cls, channels: int = const.FEATURE_CHANNELS, heads: int = const.ATTENTION_HEADS, layers: int = const.ATTENTION_LAYERS) -> AttentionStack:
        """
        Zero query/key projections and identity value/output maps, no residual, FFN or norm.

        Each layer then returns the plain mean of its response rows.
        """
        config = AttentionConfig(channels, heads, layers, residual=False, norm=False, ffn=False)
        stack = cls(config)
        eye = torch.eye(channels, dtype=torch.float64)
        with torch.no_grad():
            for layer in stack.layers:
                layer.w_q.weight.zero_()
                layer.w_k.weight.zero_()
                layer.w_v.weight.copy_(eye)
                layer.out_proj.weight.copy_(eye)
                layer.out_proj.bias.zero_()
        return stack

    @classmethod
    def identity(cls, channels: int = const.FEATURE_CHANNELS, heads: int = const.ATTENTION_HEADS, layers: int = const.ATTENTION_LAYERS) -> AttentionStack:
        """Zero attention and FFN outputs with residuals on and norms off: output = input."""
        config = AttentionConfig(channels, heads, layers, residual=True, norm=False, ffn=True)
        stack = cls(config)
        with torch.no_grad():
            for layer in stack.layers:
                layer.out_proj.weight.zero_()
                layer.out_proj.bias.zero_()
                layer.ffn[2].weight.zero_()
                layer.ffn[2].bias.zero_()
        return stack


def attend(q: torch.Tensor, responses: torch.Tensor, layer: AttentionLayer) -> torch.Tensor:
    """Attention output (without residual, FFN or norm) of queries over their responses."""
    if responses.shape[-1] != q.shape[-1]:
        raise ShapeError("Query and response widths differ", expected=q.shape[-1], actual=responses.shape[-1])
    return layer.attend(q, responses)


def align_agent(
    f: FeatureMap,
    offsets: OffsetSource,
    stack: AttentionStack,
    vacate: Optional[torch.Tensor] = None,
    grad: bool = False,
) -> FeatureMap:
    """
    Run the attention stack over every cell of an agent's map.

    Args:
        f: Agent features in the ego frame at t
        offsets: A fixed OffsetMap reused by every layer, or a callable
            regenerating offsets from each layer's input
        stack: Attention parameters
        vacate: Optional (H, W) mask of cells zeroed after the stack
        grad: Keep the autograd graph

    Returns:
        Aligned map on the same grid
    """
    if f.channels != stack.config.channels:
        raise ShapeError("Attention width", expected=stack.config.channels, actual=f.channels)
    current = f
    with torch.set_grad_enabled(grad):
        for layer in stack.layers:
            offs = offsets(current) if callable(offsets) else offsets
            if offs.shape != f.grid.shape:
                raise ShapeError("Offsets do not cover the grid", expected=f.grid.shape, actual=offs.shape)
            q = current.data.permute(1, 2, 0)
            out = layer(q, gather_response(current, offs))
            current = current.with_data(out.permute(2, 0, 1).contiguous())
        if vacate is not None:
            current = current.with_data(current.data.masked_fill(vacate.unsqueeze(0), 0.0))
    return current
