"""Offset generator: features and predicted field in, n (drow, dcol) deltas per cell out."""

from __future__ import annotations

import torch
from torch import nn

from .. import constants as const
from ..exceptions import ShapeError
from ..featuremap import FeatureMap
from ..trajfield import TrajectoryField
from .ground_truth import OffsetMap, query_grid

FIELD_PLANES = 3


class OffsetGenerator(nn.Module):
    """3x3 conv, PReLU, 3x3 conv to 2n channels."""

    def __init__(
        self,
        channels: int = const.FEATURE_CHANNELS,
        hidden: int = const.OFFSET_HIDDEN,
        n: int = const.NUM_OFFSETS,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.n = n
        self.conv1 = nn.Conv2d(channels + FIELD_PLANES, hidden, 3, padding=1, dtype=torch.float64)
        self.act = nn.PReLU(hidden, dtype=torch.float64)
        self.conv2 = nn.Conv2d(hidden, 2 * n, 3, padding=1, dtype=torch.float64)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv2(self.act(self.conv1(x)))


def predict_offsets(
    features: FeatureMap,
    field: TrajectoryField,
    model: OffsetGenerator,
    grad: bool = False,
) -> OffsetMap:
    """
    Attention positions for every cell: query coordinates plus predicted deltas.

    Args:
        features: Aggregated agent features in the ego frame
        field: Predicted trajectory field on the same grid
        model: Generator parameters
        grad: Keep the autograd graph

    Raises:
        ShapeError: If grids or channel counts disagree
    """
    if features.grid.shape != field.grid.shape:
        raise ShapeError("Features and field on different grids", expected=features.grid.shape, actual=field.grid.shape)
    if features.channels != model.channels:
        raise ShapeError("Offset generator input channels", expected=model.channels, actual=features.channels)
    h, w = features.grid.shape
    x = torch.cat([features.data, field.stacked()], dim=0).unsqueeze(0)
    with torch.set_grad_enabled(grad):
        raw = model(x)[0]
        deltas = raw.reshape(model.n, 2, h, w).permute(2, 3, 0, 1)
        positions = query_grid(h, w).unsqueeze(2) + deltas
    return OffsetMap(positions, "predicted")
