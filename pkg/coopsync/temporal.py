"""
Temporal embedding, 1x1 fusion and ego-frame history assembly.

The embedding of a delay of tau frames over C channels is

    values[2j]     = sin(tau / 8^(2j/C))
    values[2j + 1] = cos(tau / 8^(2j/C))      j = 0 .. C/2 - 1

broadcast over the grid. It is concatenated to the features and mapped
back to C channels by a 1x1 convolution, then every cached map is warped
into the ego frame at the evaluation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import torch
from torch import nn

from . import constants as const
from .exceptions import ConfigError, MissingPoseError, ShapeError
from .featuremap import FeatureMap
from .geometry import GridSpec, Pose2, relative_pose, warp_feature_map
from .utils import check_even, frame_age


def embedding_argument(tau: float, j: int, channels: int, base: float = const.TE_BASE) -> float:
    """
    Sine/cosine argument of channel pair ``j``.

    Examples:
        >>> embedding_argument(2, 16, 32)
        0.25
    """
    return tau / base ** (2.0 * j / channels)


@dataclass(frozen=True)
class TemporalEmbedding:
    """Per-channel embedding of a delay of ``tau`` frames."""

    tau: float
    channels: int
    values: torch.Tensor

    def as_map(self, grid: GridSpec) -> torch.Tensor:
        """(C, H, W) constant map."""
        return self.values.view(-1, 1, 1).expand(self.channels, *grid.shape)


def temporal_embed(tau: float, channels: int, base: float = const.TE_BASE) -> TemporalEmbedding:
    """
    Sinusoidal embedding of a frame delay.

    Args:
        tau: Delay in frames (>= 0)
        channels: Embedding width, must be even
        base: Frequency base

    Raises:
        ConfigError: If ``channels`` is odd or ``tau`` negative
    """
    check_even(channels)
    if tau < 0 or not math.isfinite(tau):
        raise ConfigError("Temporal delay must be a non-negative frame count", str(tau), field="tau")
    j = torch.arange(channels // 2, dtype=torch.float64)
    arg = tau / base ** (2.0 * j / channels)
    values = torch.empty(channels, dtype=torch.float64)
    values[0::2] = torch.sin(arg)
    values[1::2] = torch.cos(arg)
    return TemporalEmbedding(float(tau), channels, values)


class TemporalFusion(nn.Module):
    """1x1 convolution from [features | embedding] (2C) back to C channels."""

    def __init__(self, channels: int = const.FEATURE_CHANNELS) -> None:
        super().__init__()
        self.channels = check_even(channels)
        self.conv = nn.Conv2d(2 * channels, channels, 1, dtype=torch.float64)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)

    def set_blocks(self, feature_block: Optional[torch.Tensor], embedding_block: Optional[torch.Tensor]) -> TemporalFusion:
        """Overwrite the weight as [feature_block | embedding_block] with zero bias; None means zero."""
        c = self.channels
        with torch.no_grad():
            self.conv.weight.zero_()
            self.conv.bias.zero_()
            if feature_block is not None:
                self.conv.weight[:, :c, 0, 0] = feature_block
            if embedding_block is not None:
                self.conv.weight[:, c:, 0, 0] = embedding_block
        return self

    @classmethod
    def identity(cls, channels: int = const.FEATURE_CHANNELS) -> TemporalFusion:
        """[I | 0]: passes features through and ignores the embedding."""
        return cls(channels).set_blocks(torch.eye(channels, dtype=torch.float64), None)


def fuse_temporal(f: FeatureMap, te: TemporalEmbedding, module: TemporalFusion) -> FeatureMap:
    """
    Concatenate the embedding to ``f`` and apply the 1x1 map.

    Raises:
        ShapeError: If the embedding width differs from the map's channels
    """
    if te.channels != f.channels or module.channels != f.channels:
        raise ShapeError(
            "Temporal embedding does not match feature channels",
            expected=f.channels,
            actual=(te.channels, module.channels),
        )
    x = torch.cat([f.data, te.as_map(f.grid)], dim=0).unsqueeze(0)
    with torch.no_grad():
        out = module(x)[0]
    return f.with_data(out)


def history_delays(
    entries: Sequence[FeatureMap],
    reference_us: int,
    frequency_hz: float = const.DEFAULT_FREQUENCY_HZ,
) -> list[int]:
    """Whole frames each entry lies behind ``reference_us``; entries newer than it count as 0."""
    return [frame_age(reference_us, f.timestamp_us, frequency_hz) if f.timestamp_us <= reference_us else 0 for f in entries]


def assemble_history(
    entries: Iterable[FeatureMap],
    ego_pose_at_t: Pose2,
    module: TemporalFusion,
    reference_us: int,
    target_us: Optional[int] = None,
    poses: Optional[Mapping[int, Pose2]] = None,
    target_grid: Optional[GridSpec] = None,
    frequency_hz: float = const.DEFAULT_FREQUENCY_HZ,
) -> list[FeatureMap]:
    """
    TE-fuse each cached map and warp it into the ego frame at t.

    Args:
        entries: Cached maps of one agent, oldest first (an AgentCache works)
        ego_pose_at_t: Ego sensor pose at the evaluation time
        module: 1x1 fusion parameters
        reference_us: Time of the newest available ego frame; tau counts frames behind it
        target_us: Timestamp stamped on the outputs (defaults to ``reference_us``)
        poses: Capture pose per timestamp; falls back to each map's own pose
        target_grid: Output grid (defaults to each map's grid)
        frequency_hz: Sampling rate of the producing agent

    Returns:
        Ego-frame maps, oldest first

    Raises:
        MissingPoseError: If an entry has no known capture pose
    """
    entries = list(entries)
    target_us = reference_us if target_us is None else target_us
    out: list[FeatureMap] = []
    for f, tau in zip(entries, history_delays(entries, reference_us, frequency_hz)):
        pose = poses.get(f.timestamp_us) if poses is not None else None
        pose = pose or f.pose
        if pose is None:
            raise MissingPoseError(f.timestamp_us, f.agent_id)
        fused = fuse_temporal(f, temporal_embed(tau, f.channels), module)
        out.append(
            warp_feature_map(
                fused,
                relative_pose(ego_pose_at_t, pose),
                target_grid=target_grid,
                timestamp_us=target_us,
                source_frame=f"ego@{target_us}",
            )
        )
    return out


def aggregate_mean(history: Sequence[FeatureMap]) -> FeatureMap:
    """Per-cell mean of an agent's assembled history."""
    if not history:
        raise ShapeError("Cannot aggregate an empty history", expected=">= 1 map", actual=0)
    stacked = torch.stack([f.data for f in history])
    return history[-1].with_data(stacked.mean(dim=0))


def aggregate_concat(history: Sequence[FeatureMap], max_frames: int = const.COOP_FRAMES) -> torch.Tensor:
    """
    Channel concatenation of the newest ``max_frames`` maps, zero-padded at the oldest end.

    Returns:
        (max_frames * C, H, W) tensor, oldest block first
    """
    if not history:
        raise ShapeError("Cannot aggregate an empty history", expected=">= 1 map", actual=0)
    kept = list(history)[-max_frames:]
    ref = kept[-1].data
    pad = [torch.zeros_like(ref)] * (max_frames - len(kept))
    return torch.cat(pad + [f.data for f in kept], dim=0)
