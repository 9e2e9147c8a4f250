"""
Agent fusion, detection decoding and the combined training loss.

The detection head is a per-cell centre-score head with direct box
regression: (score, dx, dy, log l, log w, cos yaw, sin yaw), the centre
offsets in cells from the cell centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import nn
from torch.nn import functional as F

from . import constants as const
from .exceptions import ConfigError, NonFiniteError, ShapeError
from .featuremap import FeatureMap
from .geometry import GridSpec, OrientedBox, rotated_iou
from .trajfield.loss import focal_heatmap_loss


@dataclass(frozen=True)
class Detection:
    """A decoded box in the ego frame at t."""

    box: OrientedBox
    score: float
    timestamp_us: int = 0

    def to_record(self) -> dict[str, float]:
        b = self.box
        return {"cx": b.cx, "cy": b.cy, "yaw": b.yaw, "l": b.length, "w": b.width, "score": self.score}


# =============================================================================
# Fusion
# =============================================================================


class FusionConv(nn.Module):
    """3x3 convolution over the channel concatenation of a fixed number of agents."""

    def __init__(self, channels: int = const.FEATURE_CHANNELS, agents: int = 2) -> None:
        super().__init__()
        self.channels = channels
        self.agents = agents
        self.conv = nn.Conv2d(agents * channels, channels, 3, padding=1, dtype=torch.float64)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)

    @classmethod
    def weighted(cls, weights: Sequence[float], channels: int = const.FEATURE_CHANNELS) -> FusionConv:
        """Centre-tap identity blocks scaled per agent; ``[1, 1]`` sums, ``[0.5, 0.5]`` averages."""
        module = cls(channels, len(weights))
        eye = torch.eye(channels, dtype=torch.float64)
        with torch.no_grad():
            module.conv.weight.zero_()
            module.conv.bias.zero_()
            for i, w in enumerate(weights):
                module.conv.weight[:, i * channels : (i + 1) * channels, 1, 1] = w * eye
        return module


def fuse_agents(maps: Sequence[FeatureMap], module: FusionConv) -> FeatureMap:
    """
    Concatenate aligned maps (ego first) and convolve back to C channels.

    Missing trailing agents are zero-filled up to ``module.agents``.

    Raises:
        ShapeError: On an empty list, too many maps or mismatched grids
    """
    if not maps:
        raise ShapeError("No maps to fuse", expected=">= 1 map", actual=0)
    if len(maps) > module.agents:
        raise ShapeError("More maps than the fusion layer accepts", expected=module.agents, actual=len(maps))
    ref = maps[0]
    for f in maps[1:]:
        if f.grid != ref.grid:
            raise ShapeError("Fused maps are on different grids", expected=ref.grid.to_dict(), actual=f.grid.to_dict())
    blocks = [f.data for f in maps]
    blocks += [torch.zeros_like(ref.data)] * (module.agents - len(maps))
    x = torch.cat(blocks, dim=0).unsqueeze(0)
    with torch.no_grad():
        out = module(x)[0]
    return ref.with_data(out, agent_id="fused")


# =============================================================================
# Heads
# =============================================================================


class DetectionHead(nn.Module):
    """1x1 convolution to the seven head planes; sigmoid on the score plane."""

    def __init__(self, channels: int = const.FEATURE_CHANNELS) -> None:
        super().__init__()
        self.conv = nn.Conv2d(channels, const.HEAD_CHANNELS, 1, dtype=torch.float64)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        raw = self.conv(x)
        return torch.cat([torch.sigmoid(raw[:, :1]), raw[:, 1:]], dim=1)


class OracleHead(nn.Module):
    """
    Analytic head for painted features.

    Score is channel 0 clamped to [0, 1]; size and heading are the ratios of
    channels 1..4 to channel 0; centre offsets are zero.
    """

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mass = x[:, :1]
        score = mass.clamp(0.0, 1.0)
        safe = torch.where(mass > 0, mass, torch.ones_like(mass))
        attrs = torch.where(mass > 0, x[:, 1 : const.PAINT_CHANNELS] / safe, torch.zeros_like(x[:, 1 : const.PAINT_CHANNELS]))
        zeros = torch.zeros_like(mass)
        return torch.cat([score, zeros, zeros, attrs], dim=1)


def encode_box_targets(box: OrientedBox, grid: GridSpec) -> Optional[tuple[tuple[int, int], torch.Tensor]]:
    """
    Head targets of a box: its centre cell and the seven-plane vector there.

    Returns:
        ((row, col), tensor [1, dx, dy, log l, log w, cos, sin]) or None when off-grid
    """
    cell = grid.cell_of(box.cx, box.cy)
    if cell is None:
        return None
    r, c = cell
    x0, y0 = grid.cell_center(r, c)
    vec = torch.tensor(
        [
            1.0,
            (box.cx - x0) / grid.cell_size,
            (box.cy - y0) / grid.cell_size,
            math.log(max(box.length, 1e-6)),
            math.log(max(box.width, 1e-6)),
            math.cos(box.yaw),
            math.sin(box.yaw),
        ],
        dtype=torch.float64,
    )
    return cell, vec


def nms(detections: Sequence[Detection], iou_threshold: float = const.NMS_IOU) -> list[Detection]:
    """Greedy rotated NMS; output sorted by descending score."""
    ordered = sorted(detections, key=lambda d: -d.score)
    kept: list[Detection] = []
    for det in ordered:
        if all(rotated_iou(det.box, k.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


def decode_head_output(
    out: torch.Tensor,
    grid: GridSpec,
    score_threshold: float = const.SCORE_THRESHOLD,
    nms_iou: float = const.NMS_IOU,
    timestamp_us: int = 0,
) -> list[Detection]:
    """
    Decode a (7, H, W) head output (score already in [0, 1]).

    Cells that are 3x3 local maxima of the score and exceed the threshold
    become boxes, followed by greedy NMS.
    """
    out = out.detach()
    score = out[0]
    pooled = F.max_pool2d(score[None, None], 3, stride=1, padding=1)[0, 0]
    peaks = ((score >= pooled) & (score > score_threshold)).nonzero().tolist()
    dets = []
    for r, c in peaks:
        v = out[:, r, c].tolist()
        x0, y0 = grid.cell_center(r, c)
        box = OrientedBox(
            x0 + v[1] * grid.cell_size,
            y0 + v[2] * grid.cell_size,
            math.atan2(v[6], v[5]),
            math.exp(v[3]),
            math.exp(v[4]),
        )
        dets.append(Detection(box, float(v[0]), timestamp_us))
    return nms(dets, nms_iou)


def decode_detections(
    fused: FeatureMap,
    head: nn.Module,
    score_threshold: float = const.SCORE_THRESHOLD,
    nms_iou: float = const.NMS_IOU,
) -> list[Detection]:
    """Run ``head`` on the fused map and decode its output."""
    with torch.no_grad():
        out = head(fused.data.unsqueeze(0))[0]
    return decode_head_output(out, fused.grid, score_threshold, nms_iou, fused.timestamp_us)


# =============================================================================
# Losses
# =============================================================================


def detection_targets(boxes: Sequence[OrientedBox], grid: GridSpec, sigma: float = const.FIELD_SIGMA_CELLS) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Gaussian centre heatmap (H, W), regression targets (6, H, W) and their (H, W) mask.
    """
    h, w = grid.shape
    heat = torch.zeros(h, w, dtype=torch.float64)
    reg = torch.zeros(6, h, w, dtype=torch.float64)
    mask = torch.zeros(h, w, dtype=torch.bool)
    rows = torch.arange(h, dtype=torch.float64).view(-1, 1)
    cols = torch.arange(w, dtype=torch.float64).view(1, -1)
    for box in boxes:
        encoded = encode_box_targets(box, grid)
        if encoded is None:
            continue
        (r, c), vec = encoded
        d2 = (rows - r) ** 2 + (cols - c) ** 2
        blob = torch.where(d2 <= (const.FIELD_TRUNCATE_SIGMAS * sigma) ** 2, torch.exp(-d2 / (2 * sigma**2)), torch.zeros_like(d2))
        heat = torch.maximum(heat, blob)
        reg[:, r, c] = vec[1:]
        mask[r, c] = True
    return heat, reg, mask


def detection_loss(logits: torch.Tensor, boxes: Sequence[OrientedBox], grid: GridSpec) -> torch.Tensor:
    """
    Focal loss on the centre heatmap plus smooth-L1 regression at GT centre cells.

    Args:
        logits: (7, H, W) raw head output (score plane before the sigmoid)
        boxes: Ground-truth boxes in the grid's frame
        grid: Feature grid
    """
    heat, reg, mask = detection_targets(boxes, grid)
    focal, peaks = focal_heatmap_loss(torch.sigmoid(logits[0]), heat)
    score_term = focal / max(peaks, 1)
    if int(mask.sum()) == 0:
        return score_term
    reg_term = F.smooth_l1_loss(logits[1:, mask], reg[:, mask], reduction="sum") / int(mask.sum())
    return score_term + reg_term


@dataclass(frozen=True)
class LossWeights:
    """Weights of the field (alpha) and offset (beta) terms."""

    alpha: float = const.FIELD_LOSS_WEIGHT
    beta: float = const.OFFSET_LOSS_WEIGHT

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError("Loss weights must be finite and non-negative", f"{name}={value}", field=name)


@dataclass(frozen=True)
class LossBreakdown:
    total: torch.Tensor
    detection: torch.Tensor
    field: torch.Tensor
    offset: torch.Tensor

    def as_dict(self) -> dict[str, float]:
        return {
            "loss": float(self.total),
            "detection": float(self.detection),
            "field": float(self.field),
            "offset": float(self.offset),
        }


def _mean(values: Sequence[torch.Tensor]) -> torch.Tensor:
    if not values:
        return torch.zeros((), dtype=torch.float64)
    return torch.stack([torch.as_tensor(v, dtype=torch.float64) for v in values]).mean()


def total_loss(
    det: torch.Tensor,
    field_losses: Sequence[torch.Tensor],
    offset_losses: Sequence[torch.Tensor],
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    """
    det + alpha * mean(field) + beta * mean(offset).

    Raises:
        NonFiniteError: Naming the first non-finite component
    """
    det = torch.as_tensor(det, dtype=torch.float64)
    field = _mean(field_losses)
    offset = _mean(offset_losses)
    for name, value in (("detection", det), ("field", field), ("offset", offset)):
        if not torch.isfinite(value).all():
            raise NonFiniteError(name, float(value))
    return LossBreakdown(det + weights.alpha * field + weights.beta * offset, det, field, offset)
