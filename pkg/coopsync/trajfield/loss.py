"""Field loss: penalty-reduced focal loss on position, L1 on orientation."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .. import constants as const
from .. import logger
from ..exceptions import ShapeError
from .ground_truth import TrajectoryField

PROB_EPS = 1e-12


@dataclass(frozen=True)
class FieldLoss:
    """Field loss and its components; ``no_peaks`` flags a GT without any peak."""

    total: torch.Tensor
    position: torch.Tensor
    orientation: torch.Tensor
    no_peaks: bool = False

    def as_dict(self) -> dict[str, float]:
        return {
            "field": float(self.total),
            "field_position": float(self.position),
            "field_orientation": float(self.orientation),
        }


def focal_heatmap_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    alpha: float = const.FOCAL_ALPHA,
    beta: float = const.FOCAL_BETA,
) -> tuple[torch.Tensor, int]:
    """
    Summed penalty-reduced focal loss and the number of GT peaks (cells equal to 1).

    Peaks contribute -(1 - p)^alpha log p, every other cell
    -(1 - g)^beta p^alpha log(1 - p).
    """
    p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)
    peaks = gt == 1.0
    pos = -((1.0 - p) ** alpha) * torch.log(p)
    neg = -((1.0 - gt) ** beta) * p**alpha * torch.log(1.0 - p)
    return torch.where(peaks, pos, neg).sum(), int(peaks.sum())


def field_loss(
    pred: TrajectoryField,
    gt: TrajectoryField,
    alpha: float = const.FOCAL_ALPHA,
    beta: float = const.FOCAL_BETA,
) -> FieldLoss:
    """
    Compare a predicted field with its ground truth.

    Position: focal loss summed over the grid, divided by the peak count
    (0 with a warning when the GT has no peak). Orientation: per-cell L1
    over both planes, averaged over cells the GT covers.

    A prediction equal to the GT scores zero only when the GT position is
    binary (``rasterize_field(..., binary=True)``). Against the default soft
    peaks every non-peak cell with 0 < g < 1 still adds a positive term.

    Raises:
        ShapeError: If the fields' shapes differ
    """
    if pred.position.shape != gt.position.shape or pred.orientation.shape != gt.orientation.shape:
        raise ShapeError(
            "Predicted and ground-truth fields differ in shape",
            expected=tuple(gt.position.shape),
            actual=tuple(pred.position.shape),
        )
    summed, peaks = focal_heatmap_loss(pred.position, gt.position.to(pred.position.dtype), alpha, beta)
    no_peaks = peaks == 0
    if no_peaks:
        logger.warning("Field ground truth has no peaks, position loss set to 0")
        position = summed * 0.0
    else:
        position = summed / peaks

    covered = gt.covered
    n_cov = int(covered.sum())
    diff = (pred.orientation - gt.orientation.to(pred.orientation.dtype)).abs().sum(dim=0)
    orientation = diff[covered].sum() / n_cov if n_cov else diff.sum() * 0.0
    return FieldLoss(position + orientation, position, orientation, no_peaks)
