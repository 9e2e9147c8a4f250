"""Offset loss: transport cost between predicted and ground-truth position sets."""

from __future__ import annotations

from typing import Optional, Union

import torch

from .. import constants as const
from ..exceptions import ShapeError
from .ground_truth import OffsetMap, OffsetSet
from .sinkhorn import sinkhorn


def offset_cost(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """(..., n, 2) x (..., n, 2) -> (..., n, n) L1 distances in cells."""
    return (pred.unsqueeze(-2) - gt.unsqueeze(-3)).abs().sum(dim=-1)


def matched_cost(pred: torch.Tensor, gt: torch.Tensor, reg: float = const.SINKHORN_REG) -> torch.Tensor:
    """
    Sum of plan * cost per set, the plan solved on the detached cost.

    Gradients flow through the cost only.

    Returns:
        (...) tensor of per-set losses
    """
    if pred.shape != gt.shape:
        raise ShapeError("Offset sets differ in shape", expected=tuple(gt.shape), actual=tuple(pred.shape))
    cost = offset_cost(pred, gt.to(pred.dtype))
    plan = sinkhorn(cost.detach(), reg).plan
    return (plan * cost).sum(dim=(-2, -1))


def offset_loss(
    pred: Union[OffsetSet, torch.Tensor],
    gt: Union[OffsetSet, torch.Tensor],
    reg: float = const.SINKHORN_REG,
) -> torch.Tensor:
    """
    Transport loss of one query; invariant to the order of either set.

    With n = 1 this is the L1 distance between the two positions.
    """
    pred_t = pred.positions if isinstance(pred, OffsetSet) else pred
    gt_t = gt.positions if isinstance(gt, OffsetSet) else gt
    return matched_cost(pred_t, gt_t, reg)


def offset_map_loss(
    pred: OffsetMap,
    gt: OffsetMap,
    foreground: Optional[torch.Tensor] = None,
    reg: float = const.SINKHORN_REG,
) -> torch.Tensor:
    """
    Mean transport loss over queries.

    Args:
        pred: Predicted offset map
        gt: Ground-truth offset map
        foreground: Optional (H, W) mask restricting the queries averaged
        reg: Sinkhorn regularization
    """
    per_query = matched_cost(pred.positions, gt.positions, reg)
    if foreground is not None:
        if int(foreground.sum()) == 0:
            return per_query.sum() * 0.0
        return per_query[foreground].mean()
    return per_query.mean()
