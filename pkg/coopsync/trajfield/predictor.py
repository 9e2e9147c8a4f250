"""Field predictor: a small UNet from stacked history features to a trajectory field."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .. import constants as const
from ..exceptions import ShapeError
from ..geometry import GridSpec
from .ground_truth import TrajectoryField


def _conv(cin: int, cout: int) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, 3, padding=1, dtype=torch.float64)


class FieldPredictor(nn.Module):
    """
    UNet variant: max-pool down, nearest-neighbour up, skip concatenation.

    Output planes are [position logit, orientation x, orientation y].
    """

    def __init__(
        self,
        in_channels: int = const.FEATURE_CHANNELS * const.COOP_FRAMES,
        width: int = const.UNET_BASE_WIDTH,
        depth: int = const.UNET_DEPTH,
    ) -> None:
        super().__init__()
        self.in_channels = in_channels
        self.depth = depth
        widths = [width * 2**k for k in range(depth + 1)]
        self.down = nn.ModuleList([_conv(in_channels, widths[0])])
        self.down.extend(_conv(widths[k - 1], widths[k]) for k in range(1, depth))
        self.bottleneck = _conv(widths[depth - 1], widths[depth])
        self.up = nn.ModuleList(_conv(widths[k + 1] + widths[k], widths[k]) for k in reversed(range(depth)))
        self.head = nn.Conv2d(widths[0], 3, 1, dtype=torch.float64)

    @property
    def stride(self) -> int:
        return 2**self.depth

    def receptive_radius(self) -> int:
        """Cells (per axis) an input impulse can move the output by: convs and pools at every scale."""
        encoder = sum(2**k for k in range(self.depth + 1))
        pools = sum(2**k for k in range(self.depth))
        decoder = sum(2**k for k in range(self.depth))
        return encoder + pools + decoder

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        h = x
        for k, conv in enumerate(self.down):
            if k:
                h = F.max_pool2d(h, 2)
            h = torch.relu(conv(h))
            skips.append(h)
        h = torch.relu(self.bottleneck(F.max_pool2d(h, 2)))
        for conv, skip in zip(self.up, reversed(skips)):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = torch.relu(conv(torch.cat([h, skip], dim=1)))
        return self.head(h)


def squash_field(
    raw: torch.Tensor,
    threshold: float = const.FIELD_ORIENTATION_THRESHOLD,
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    (3, H, W) raw head output to (position, orientation).

    Position goes through a sigmoid; orientation is normalized to unit
    length where position exceeds ``threshold`` and left raw elsewhere.
    """
    position = torch.sigmoid(raw[0:1])
    orientation = raw[1:3]
    norm = torch.linalg.vector_norm(orientation, dim=0, keepdim=True).clamp_min(1e-12)
    orientation = torch.where(position > threshold, orientation / norm, orientation)
    return position, orientation


def predict_field(
    history: torch.Tensor,
    grid: GridSpec,
    model: FieldPredictor,
    timestamp_us: int = 0,
    grad: bool = False,
) -> TrajectoryField:
    """
    Run the field predictor on a channel-stacked history.

    Args:
        history: (frames * C, H, W) concatenation of the assembled history
        grid: Grid of the history maps
        model: Predictor parameters
        timestamp_us: Ego time
        grad: Keep the autograd graph (for loss evaluation)

    Raises:
        ShapeError: If H or W is not divisible by 2^depth or channels mismatch
    """
    c, h, w = history.shape
    if h % model.stride or w % model.stride:
        raise ShapeError(
            f"Field predictor needs spatial size divisible by {model.stride}",
            expected=f"multiples of {model.stride}",
            actual=(h, w),
        )
    if c != model.in_channels:
        raise ShapeError("Field predictor input channels", expected=model.in_channels, actual=c)
    with torch.set_grad_enabled(grad):
        raw = model(history.unsqueeze(0))[0]
        position, orientation = squash_field(raw)
    return TrajectoryField(grid, position, orientation, timestamp_us=timestamp_us)
