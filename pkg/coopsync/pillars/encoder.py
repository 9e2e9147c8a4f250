"""
Pillar encoder and dense backbone.

The encoder applies a per-point affine map and ReLU, max-pools per pillar
and scatters the result onto the base grid. The backbone is two stride-2
3x3 convolution blocks bringing the map to one-fourth resolution.
"""

from __future__ import annotations

from typing import Optional

import torch
from torch import nn

from .. import constants as const
from ..exceptions import ShapeError
from ..featuremap import FeatureMap
from ..geometry import Pose2
from ..utils import check_divisible
from .pillarize import PillarSet, pillar_index


class PillarEncoder(nn.Module):
    """Point-wise Linear + ReLU followed by a per-pillar max."""

    def __init__(self, out_channels: int = const.FEATURE_CHANNELS) -> None:
        super().__init__()
        self.linear = nn.Linear(const.DECORATION_DIM, out_channels, dtype=torch.float64)
        self.out_channels = out_channels

    def forward(self, points: torch.Tensor, owner: torch.Tensor, num_pillars: int) -> torch.Tensor:
        """(P, 9) points and (P,) pillar ids -> (num_pillars, C) pillar features."""
        h = torch.relu(self.linear(points))
        pooled = torch.zeros(num_pillars, self.out_channels, dtype=h.dtype)
        index = owner.unsqueeze(1).expand(-1, self.out_channels)
        return pooled.scatter_reduce(0, index, h, reduce="amax", include_self=False)


class Backbone(nn.Module):
    """Two stride-2 conv blocks: base grid -> 1/4 grid."""

    kernel_size = 3
    strides = (2, 2)

    def __init__(self, in_channels: int = const.FEATURE_CHANNELS, out_channels: int = const.FEATURE_CHANNELS) -> None:
        super().__init__()
        self.block1 = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1, dtype=torch.float64)
        self.block2 = nn.Conv2d(out_channels, out_channels, 3, stride=2, padding=1, dtype=torch.float64)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.block2(torch.relu(self.block1(x))))

    @classmethod
    def support(cls, index: int) -> tuple[int, int]:
        """Output indices (inclusive) that an input impulse at ``index`` can reach."""
        # output i reads input rows 4i-3 .. 4i+3
        lo = -((3 - index) // 4)  # ceil((index - 3) / 4)
        hi = (index + 3) // 4
        return lo, hi


def encode_pillars(
    pillars: PillarSet,
    encoder: PillarEncoder,
    timestamp_us: int,
    agent_id: str,
    pose: Optional[Pose2] = None,
) -> FeatureMap:
    """
    Encode pillars into a base-resolution FeatureMap.

    Empty cells stay zero; duplicate points do not change a pillar's value.

    Args:
        pillars: Output of :func:`pillarize`
        encoder: Point-wise encoder parameters
        timestamp_us: Capture time of the frame
        agent_id: Producing agent
        pose: Sensor pose at capture

    Returns:
        FeatureMap with ``encoder.out_channels`` channels on ``pillars.grid``
    """
    if encoder.linear.in_features != const.DECORATION_DIM:
        raise ShapeError("Encoder input width", expected=const.DECORATION_DIM, actual=encoder.linear.in_features)
    grid = pillars.grid
    points, owner, flat_cells = pillar_index(pillars)
    out = torch.zeros(encoder.out_channels, grid.height_cells * grid.width_cells, dtype=torch.float64)
    if flat_cells is not None:
        with torch.no_grad():
            pooled = encoder(torch.from_numpy(points), torch.from_numpy(owner), len(flat_cells))
        out[:, torch.from_numpy(flat_cells)] = pooled.T
    return FeatureMap(
        out.reshape(encoder.out_channels, *grid.shape),
        grid,
        timestamp_us,
        agent_id,
        source_frame=f"{agent_id}@{timestamp_us}",
        pose=pose,
    )


def backbone(f: FeatureMap, module: Backbone) -> FeatureMap:
    """
    Run the dense backbone; output cells are four times larger.

    Raises:
        ShapeError: If H or W is not divisible by 4
    """
    check_divisible(f.grid.height_cells, f.grid.width_cells, const.FEATURE_STRIDE, "Backbone")
    if f.channels != module.block1.in_channels:
        raise ShapeError("Backbone input channels", expected=module.block1.in_channels, actual=f.channels)
    with torch.no_grad():
        data = module(f.data.unsqueeze(0))[0]
    return f.with_data(data, grid=f.grid.downsampled(const.FEATURE_STRIDE))


def identity_encoder(out_channels: int = const.FEATURE_CHANNELS) -> PillarEncoder:
    """Encoder whose first nine channels copy the decorated vector (before ReLU)."""
    enc = PillarEncoder(out_channels)
    with torch.no_grad():
        enc.linear.weight.zero_()
        enc.linear.bias.zero_()
        enc.linear.weight[: const.DECORATION_DIM, :] = torch.eye(const.DECORATION_DIM, dtype=torch.float64)
    return enc
