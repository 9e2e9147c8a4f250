"""
Trajectory fields.

- Ground truth: trajectories over the delay window and their rasterization
- Prediction: UNet forward pass from stacked history features
- Loss: focal position term plus L1 orientation term
"""

from .ground_truth import (
    EMPTY,
    Trajectory,
    TrajectoryField,
    TrajectorySample,
    build_trajectories,
    rasterize_field,
    window_timestamps,
)
from .loss import FieldLoss, field_loss, focal_heatmap_loss
from .predictor import FieldPredictor, predict_field, squash_field

__all__ = [
    # Ground truth
    "EMPTY",
    "Trajectory",
    "TrajectoryField",
    "TrajectorySample",
    "build_trajectories",
    "rasterize_field",
    "window_timestamps",
    # Prediction
    "FieldPredictor",
    "predict_field",
    "squash_field",
    # Loss
    "FieldLoss",
    "field_loss",
    "focal_heatmap_loss",
]
