"""
Feature extractors: one point-cloud frame in, one sensor-frame FeatureMap out.

Two extractors share the same interface:

- PillarExtractor: pillarize, encode and run the dense backbone
- BoxPainter: write the frame's box annotations into the feature grid so
  the alignment stages can be exercised without trained weights
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import torch

from . import constants as const
from . import logger
from .exceptions import ConfigError, ShapeError
from .featuremap import FeatureMap
from .geometry import GridSpec
from .pillars import Backbone, PillarEncoder, backbone, encode_pillars, pillarize
from .simkit.generator import PointCloudFrame
from .simkit.scenario import BoxAnnotation


class BaseExtractor(ABC):
    """
    Abstract base class for frame feature extractors.

    Subclasses turn a PointCloudFrame into a feature-resolution map in the
    frame's own sensor coordinates.
    """

    def __init__(self, base_grid: GridSpec, channels: int = const.FEATURE_CHANNELS) -> None:
        self.base_grid = base_grid
        self.channels = channels
        self.validate_params()

    @property
    def feature_grid(self) -> GridSpec:
        return self.base_grid.downsampled(const.FEATURE_STRIDE)

    @abstractmethod
    def extract(self, frame: PointCloudFrame) -> FeatureMap:
        """
        Build the feature map of one frame.

        Returns:
            FeatureMap on ``feature_grid`` stamped with the frame's time and pose
        """

    @abstractmethod
    def validate_params(self) -> bool:
        """
        Check the extractor's parameters against its grid.

        Raises:
            ConfigError or ShapeError on inconsistent configuration
        """

    def extract_all(self, frames: list[PointCloudFrame]) -> list[FeatureMap]:
        return [self.extract(f) for f in frames]


class PillarExtractor(BaseExtractor):
    """Pillar encoder followed by the 1/4-scale backbone."""

    def __init__(
        self,
        base_grid: GridSpec,
        encoder: PillarEncoder,
        net: Backbone,
        z_range: tuple[float, float] = const.Z_RANGE,
        center_mode: str = "geometric",
    ) -> None:
        self.encoder = encoder
        self.net = net
        self.z_range = z_range
        self.center_mode = center_mode
        super().__init__(base_grid, net.block2.out_channels)

    def validate_params(self) -> bool:
        if self.encoder.out_channels != self.net.block1.in_channels:
            raise ShapeError(
                "Encoder output does not feed the backbone",
                expected=self.net.block1.in_channels,
                actual=self.encoder.out_channels,
            )
        return True

    def extract(self, frame: PointCloudFrame) -> FeatureMap:
        pillars = pillarize(frame.points, self.base_grid, self.z_range, self.center_mode)
        base = encode_pillars(pillars, self.encoder, frame.timestamp_us, frame.agent_id, frame.sensor_pose)
        return backbone(base, self.net)


class BoxPainter(BaseExtractor):
    """
    Paint annotated boxes onto the feature grid.

    The cell containing a box centre holds [1, log l, log w, cos yaw, sin yaw]
    in its first five channels; every other value is zero. Boxes whose
    centre falls outside the grid are skipped.
    """

    def validate_params(self) -> bool:
        if self.channels < const.PAINT_CHANNELS:
            raise ConfigError(
                f"Painting needs at least {const.PAINT_CHANNELS} channels",
                str(self.channels),
                field="channels",
            )
        return True

    @staticmethod
    def paint_vector(box: BoxAnnotation) -> list[float]:
        b = box.box
        return [
            1.0,
            math.log(max(b.length, 1e-6)),
            math.log(max(b.width, 1e-6)),
            math.cos(b.yaw),
            math.sin(b.yaw),
        ]

    def paint(self, boxes: tuple[BoxAnnotation, ...], grid: GridSpec) -> torch.Tensor:
        data = torch.zeros((self.channels,) + grid.shape, dtype=torch.float64)
        for ann in boxes:
            cell = grid.cell_of(ann.box.cx, ann.box.cy)
            if cell is None:
                continue
            r, c = cell
            if data[0, r, c] != 0:
                logger.debug(f"Object {ann.object_id} shares cell {cell}, overwriting")
            data[: const.PAINT_CHANNELS, r, c] = torch.tensor(self.paint_vector(ann), dtype=torch.float64)
        return data

    def extract(self, frame: PointCloudFrame) -> FeatureMap:
        grid = self.feature_grid
        return FeatureMap(
            self.paint(frame.boxes, grid),
            grid,
            frame.timestamp_us,
            frame.agent_id,
            source_frame=f"{frame.agent_id}@{frame.timestamp_us}",
            pose=frame.sensor_pose,
        )
