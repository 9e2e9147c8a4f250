"""
Attention offsets.

- Ground truth positions per query from a rasterized field
- Learned generator forward pass
- Log-domain Sinkhorn and the order-free transport loss
"""

from .generator import OffsetGenerator, predict_offsets
from .ground_truth import OffsetMap, OffsetSet, gt_offset_map, gt_offsets, query_grid
from .loss import matched_cost, offset_cost, offset_loss, offset_map_loss
from .sinkhorn import TransportPlan, sinkhorn

__all__ = [
    # Positions
    "OffsetMap",
    "OffsetSet",
    "gt_offset_map",
    "gt_offsets",
    "query_grid",
    # Generator
    "OffsetGenerator",
    "predict_offsets",
    # Transport
    "TransportPlan",
    "matched_cost",
    "offset_cost",
    "offset_loss",
    "offset_map_loss",
    "sinkhorn",
]
