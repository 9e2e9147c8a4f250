"""Dense BEV feature grids exchanged between agents."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Optional

import torch

from .exceptions import NonFiniteError, ShapeError
from .geometry import GridSpec, Pose2


@dataclass(frozen=True)
class FeatureMap:
    """
    A C x H x W feature grid with its geo-referencing.

    Attributes:
        data: float64 tensor of shape (C, H, W)
        grid: Grid the cells live on
        timestamp_us: Capture (or target) time in microseconds
        agent_id: Producing agent
        source_frame: Reference frame id, e.g. ``"infra@300000"`` or ``"ego@t"``
        pose: Sensor pose in the world at capture time, when known
    """

    data: torch.Tensor
    grid: GridSpec
    timestamp_us: int
    agent_id: str
    source_frame: str = ""
    pose: Optional[Pose2] = None

    def __post_init__(self) -> None:
        if self.data.dim() != 3:
            raise ShapeError("Feature map must be 3-D", expected="(C, H, W)", actual=tuple(self.data.shape))
        if tuple(self.data.shape[1:]) != self.grid.shape:
            raise ShapeError(
                "Feature map does not match its grid",
                expected=self.grid.shape,
                actual=tuple(self.data.shape[1:]),
            )
        if not torch.isfinite(self.data).all():
            raise NonFiniteError(self.source_frame or self.agent_id)

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @classmethod
    def zeros(
        cls,
        channels: int,
        grid: GridSpec,
        timestamp_us: int,
        agent_id: str,
        **kwargs: Any,
    ) -> FeatureMap:
        data = torch.zeros((channels,) + grid.shape, dtype=torch.float64)
        return cls(data, grid, timestamp_us, agent_id, **kwargs)

    def with_data(self, data: torch.Tensor, **changes: Any) -> FeatureMap:
        """Copy with new data (and optionally other fields)."""
        return replace(self, data=data, **changes)

    def norm_map(self) -> torch.Tensor:
        """Per-cell L2 norm over channels, shape (H, W)."""
        return torch.linalg.vector_norm(self.data, dim=0)

    def __repr__(self) -> str:
        return (
            f"FeatureMap(agent='{self.agent_id}', t={self.timestamp_us}us, "
            f"shape={tuple(self.data.shape)}, cell={self.grid.cell_size}m)"
        )
